//! Point clouds, labels, boxes, the synthetic scene generator, and the oracle
//! panoptic provider.

mod format;
mod generate;
mod panoptic;

pub use format::{
    read_scene_bin, read_scene_csv, scene_from_bytes, scene_from_csv_str, scene_to_bytes,
    scene_to_csv_string, write_scene_bin, write_scene_csv, SCENE_MAGIC,
};
pub use generate::{generate_scene, ClassSpec, SceneConfig};
pub use panoptic::{
    oracle_panoptic, EncoderConfig, NoiseConfig, PanopticEstimate, PanopticOracle, RvEncoder,
    RvFeatures,
};

use serde::{Deserialize, Serialize};

/// Grid all generated coordinates are snapped to (2^-16 m). Values on it
/// are exact in `f32`, and differences and sums of them are exact in `f64`.
pub const COORD_QUANTUM: f64 = 1.0 / 65536.0;

pub fn quantize(v: f64) -> f64 {
    (v / COORD_QUANTUM).round() * COORD_QUANTUM
}

/// Maximum number of foreground classes.
pub const MAX_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Semantic and instance label. Class 0 is background; instance 0 is none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PointLabel {
    pub class_id: u32,
    pub instance_id: u32,
}

impl PointLabel {
    pub const BACKGROUND: PointLabel = PointLabel {
        class_id: 0,
        instance_id: 0,
    };

    pub fn is_foreground(&self) -> bool {
        self.class_id > 0
    }
}

/// Oriented 3D box. `class_id` is a foreground class in `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box7 {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub class_id: u32,
    pub score: f64,
}

impl Box7 {
    /// Whether `p` lies inside the box grown by `margin` on every side.
    pub fn contains(&self, p: &Point, margin: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        let lx = dx * c + dy * s;
        let ly = -dx * s + dy * c;
        lx.abs() <= self.l / 2.0 + margin
            && ly.abs() <= self.w / 2.0 + margin
            && (p.z - self.cz).abs() <= self.h / 2.0 + margin
    }

    /// Radius of the circle circumscribing the BEV footprint.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.l.hypot(self.w)
    }

    pub fn bev_distance(&self, other: &Box7) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// Tolerance used by [`Scene::violations`] for foreground containment.
pub const CONTAINMENT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: Vec<Point>,
    pub labels: Vec<PointLabel>,
    /// Ground-truth boxes; instance `i` is `boxes[i - 1]`.
    pub boxes: Vec<Box7>,
    pub num_classes: usize,
    pub seed: u64,
}

impl Scene {
    pub fn instance_box(&self, instance_id: u32) -> Option<&Box7> {
        instance_id
            .checked_sub(1)
            .and_then(|i| self.boxes.get(i as usize))
    }

    /// Every broken scene invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.points.len() != self.labels.len() {
            out.push(format!(
                "{} points but {} labels",
                self.points.len(),
                self.labels.len()
            ));
        }
        if self.num_classes > MAX_CLASSES {
            out.push(format!(
                "{} classes exceeds {MAX_CLASSES}",
                self.num_classes
            ));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.l > 0.0 && b.w > 0.0 && b.h > 0.0) {
                out.push(format!("box {} has non-positive size", i + 1));
            }
            if b.class_id == 0 || b.class_id as usize > self.num_classes {
                out.push(format!("box {} has class {}", i + 1, b.class_id));
            }
        }
        for (i, (p, l)) in self.points.iter().zip(&self.labels).enumerate() {
            if !(p.range() > 0.0) || !p.range().is_finite() {
                out.push(format!("point {i} has zero or non-finite range"));
            }
            if l.class_id as usize > self.num_classes {
                out.push(format!("point {i} has class {}", l.class_id));
            }
            match (l.is_foreground(), l.instance_id) {
                (false, 0) => {}
                (false, id) => out.push(format!("background point {i} has instance {id}")),
                (true, 0) => out.push(format!("foreground point {i} has no instance")),
                (true, id) => match self.instance_box(id) {
                    None => out.push(format!("point {i} references missing instance {id}")),
                    Some(b) => {
                        if b.class_id != l.class_id {
                            out.push(format!(
                                "point {i} class {} differs from its box class {}",
                                l.class_id, b.class_id
                            ));
                        }
                        if !b.contains(p, CONTAINMENT_MARGIN) {
                            out.push(format!("point {i} lies outside instance {id}"));
                        }
                    }
                },
            }
        }
        out
    }
}
