//! Scene persistence.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "PGF1" | u32 N | u32 B | u32 K
//! N x { f32 x, f32 y, f32 z, f32 intensity, u32 class_id, u32 instance_id }
//! B x { f32 cx, cy, cz, l, w, h, yaw, u32 class_id }
//! ```
//!
//! The CSV form carries the same columns, one record per row, tagged by the
//! first field (`meta`, `point`, `box`). Neither form stores the seed or box
//! scores; readers return seed 0 and score 1.

use std::io::Write;
use std::path::Path;

use super::{Box7, Point, PointLabel, Scene, MAX_CLASSES};
use crate::error::{format_err, Result};

pub const SCENE_MAGIC: &[u8; 4] = b"PGF1";

const HEADER_LEN: usize = 16;
const POINT_LEN: usize = 24;
const BOX_LEN: usize = 32;

pub fn scene_to_bytes(scene: &Scene) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        HEADER_LEN + POINT_LEN * scene.points.len() + BOX_LEN * scene.boxes.len(),
    );
    out.extend_from_slice(SCENE_MAGIC);
    for n in [scene.points.len(), scene.boxes.len(), scene.num_classes] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for (p, l) in scene.points.iter().zip(&scene.labels) {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&l.class_id.to_le_bytes());
        out.extend_from_slice(&l.instance_id.to_le_bytes());
    }
    for b in &scene.boxes {
        for v in [b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&b.class_id.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn word(&mut self) -> [u8; 4] {
        let w = self.buf[self.pos..self.pos + 4]
            .try_into()
            .expect("length checked");
        self.pos += 4;
        w
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.word())
    }

    fn f32(&mut self) -> f64 {
        f32::from_le_bytes(self.word()) as f64
    }
}

fn finish(scene: Scene, what: &'static str) -> Result<Scene> {
    if let Some(i) = scene
        .points
        .iter()
        .position(|p| ![p.x, p.y, p.z, p.intensity].iter().all(|v| v.is_finite()))
    {
        return format_err(what, format!("point {i} has a non-finite field"));
    }
    if let Some(i) = scene.boxes.iter().position(|b| {
        ![b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw]
            .iter()
            .all(|v| v.is_finite())
    }) {
        return format_err(what, format!("box {} has a non-finite field", i + 1));
    }
    let v = scene.violations();
    if !v.is_empty() {
        let shown: Vec<_> = v.iter().take(5).cloned().collect();
        return format_err(
            what,
            format!("{} invariant violations: {}", v.len(), shown.join("; ")),
        );
    }
    Ok(scene)
}

/// Parses and validates a binary scene. Never panics on arbitrary input.
pub fn scene_from_bytes(buf: &[u8]) -> Result<Scene> {
    const WHAT: &str = "scene binary";
    if buf.len() < HEADER_LEN {
        return format_err(
            WHAT,
            format!("{} bytes is shorter than the header", buf.len()),
        );
    }
    if &buf[..4] != SCENE_MAGIC {
        return format_err(WHAT, "bad magic");
    }
    let mut cur = Cursor { buf, pos: 4 };
    let (n, b, k) = (cur.u32() as usize, cur.u32() as usize, cur.u32() as usize);
    if k > MAX_CLASSES {
        return format_err(WHAT, format!("{k} classes exceeds {MAX_CLASSES}"));
    }
    let expect = n
        .checked_mul(POINT_LEN)
        .and_then(|p| b.checked_mul(BOX_LEN).and_then(|q| p.checked_add(q)))
        .and_then(|body| body.checked_add(HEADER_LEN));
    if expect != Some(buf.len()) {
        return format_err(
            WHAT,
            format!(
                "header declares {n} points and {b} boxes but body is {} bytes",
                buf.len()
            ),
        );
    }
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(Point::new(cur.f32(), cur.f32(), cur.f32(), cur.f32()));
        labels.push(PointLabel {
            class_id: cur.u32(),
            instance_id: cur.u32(),
        });
    }
    let mut boxes = Vec::with_capacity(b);
    for _ in 0..b {
        let f: [f64; 7] = std::array::from_fn(|_| cur.f32());
        boxes.push(Box7 {
            cx: f[0],
            cy: f[1],
            cz: f[2],
            l: f[3],
            w: f[4],
            h: f[5],
            yaw: f[6],
            class_id: cur.u32(),
            score: 1.0,
        });
    }
    finish(
        Scene {
            points,
            labels,
            boxes,
            num_classes: k,
            seed: 0,
        },
        WHAT,
    )
}

pub fn write_scene_bin(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scene_to_bytes(scene))?;
    Ok(())
}

pub fn read_scene_bin(path: impl AsRef<Path>) -> Result<Scene> {
    scene_from_bytes(&std::fs::read(path)?)
}

pub fn scene_to_csv_string(scene: &Scene) -> String {
    let mut out = Vec::new();
    writeln!(out, "meta,classes,{}", scene.num_classes).expect("in-memory write");
    for (p, l) in scene.points.iter().zip(&scene.labels) {
        writeln!(
            out,
            "point,{},{},{},{},{},{}",
            p.x, p.y, p.z, p.intensity, l.class_id, l.instance_id
        )
        .expect("in-memory write");
    }
    for b in &scene.boxes {
        writeln!(
            out,
            "box,{},{},{},{},{},{},{},{}",
            b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw, b.class_id
        )
        .expect("in-memory write");
    }
    String::from_utf8(out).expect("ascii output")
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim().parse().or_else(|_| {
        format_err(
            "scene csv",
            format!("line {line}: cannot parse field {i} `{raw}`"),
        )
    })
}

/// Parses and validates a CSV scene. Never panics on arbitrary input.
pub fn scene_from_csv_str(text: &str) -> Result<Scene> {
    const WHAT: &str = "scene csv";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut num_classes = None;
    let (mut points, mut labels, mut boxes) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let arity = |n: usize| -> Result<()> {
            if rec.len() != n {
                return format_err(
                    WHAT,
                    format!("line {line}: expected {n} fields, got {}", rec.len()),
                );
            }
            Ok(())
        };
        match rec.get(0).map(str::trim) {
            Some("meta") => {
                arity(3)?;
                if rec.get(1).map(str::trim) != Some("classes") || num_classes.is_some() {
                    return format_err(WHAT, format!("line {line}: unexpected meta row"));
                }
                let k: usize = field(&rec, 2, line)?;
                if k > MAX_CLASSES {
                    return format_err(WHAT, format!("{k} classes exceeds {MAX_CLASSES}"));
                }
                num_classes = Some(k);
            }
            Some("point") => {
                arity(7)?;
                points.push(Point::new(
                    field(&rec, 1, line)?,
                    field(&rec, 2, line)?,
                    field(&rec, 3, line)?,
                    field(&rec, 4, line)?,
                ));
                labels.push(PointLabel {
                    class_id: field(&rec, 5, line)?,
                    instance_id: field(&rec, 6, line)?,
                });
            }
            Some("box") => {
                arity(9)?;
                boxes.push(Box7 {
                    cx: field(&rec, 1, line)?,
                    cy: field(&rec, 2, line)?,
                    cz: field(&rec, 3, line)?,
                    l: field(&rec, 4, line)?,
                    w: field(&rec, 5, line)?,
                    h: field(&rec, 6, line)?,
                    yaw: field(&rec, 7, line)?,
                    class_id: field(&rec, 8, line)?,
                    score: 1.0,
                });
            }
            other => {
                return format_err(
                    WHAT,
                    format!("line {line}: unknown row tag {:?}", other.unwrap_or("")),
                )
            }
        }
    }
    let Some(num_classes) = num_classes else {
        return format_err(WHAT, "missing `meta,classes,K` row");
    };
    finish(
        Scene {
            points,
            labels,
            boxes,
            num_classes,
            seed: 0,
        },
        WHAT,
    )
}

pub fn write_scene_csv(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scene_to_csv_string(scene))?;
    Ok(())
}

pub fn read_scene_csv(path: impl AsRef<Path>) -> Result<Scene> {
    scene_from_csv_str(&std::fs::read_to_string(path)?)
}
