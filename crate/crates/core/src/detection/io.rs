//! Detection lists as CSV (`cx,cy,cz,l,w,h,yaw,class_id,score`) and as
//! versioned JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{format_err, Result};
use crate::scene::Box7;

pub const DETECTIONS_SCHEMA: &str = "pgf-detections/1";

const CSV_HEADER: [&str; 9] = ["cx", "cy", "cz", "l", "w", "h", "yaw", "class_id", "score"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    cx: f64,
    cy: f64,
    cz: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    class_id: u32,
    score: f64,
}

impl From<&Box7> for Record {
    fn from(b: &Box7) -> Self {
        Record {
            cx: b.cx,
            cy: b.cy,
            cz: b.cz,
            l: b.l,
            w: b.w,
            h: b.h,
            yaw: b.yaw,
            class_id: b.class_id,
            score: b.score,
        }
    }
}

impl Record {
    fn into_box(self, what: &'static str, i: usize) -> Result<Box7> {
        let fields = [
            self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw, self.score,
        ];
        if !fields.iter().all(|v| v.is_finite()) {
            return format_err(what, format!("detection {i} has a non-finite field"));
        }
        if !(self.l > 0.0 && self.w > 0.0 && self.h > 0.0) {
            return format_err(what, format!("detection {i} has non-positive size"));
        }
        if self.class_id == 0 {
            return format_err(what, format!("detection {i} has background class 0"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return format_err(
                what,
                format!("detection {i} score {} outside [0, 1]", self.score),
            );
        }
        Ok(Box7 {
            cx: self.cx,
            cy: self.cy,
            cz: self.cz,
            l: self.l,
            w: self.w,
            h: self.h,
            yaw: self.yaw,
            class_id: self.class_id,
            score: self.score,
        })
    }
}

pub fn detections_to_csv_string(boxes: &[Box7]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if boxes.is_empty() {
        w.write_record(CSV_HEADER).expect("in-memory write");
    }
    for b in boxes {
        w.serialize(Record::from(b)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Parses and validates a detections CSV with a header row. Never panics
/// on arbitrary input.
pub fn detections_from_csv_str(text: &str) -> Result<Vec<Box7>> {
    const WHAT: &str = "detections csv";
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return format_err(WHAT, format!("header must be {}", CSV_HEADER.join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<Record>().enumerate() {
        out.push(rec?.into_box(WHAT, i)?);
    }
    Ok(out)
}

pub fn write_detections_csv(boxes: &[Box7], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, detections_to_csv_string(boxes))?;
    Ok(())
}

pub fn read_detections_csv(path: impl AsRef<Path>) -> Result<Vec<Box7>> {
    detections_from_csv_str(&std::fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    schema: String,
    detections: Vec<Record>,
}

pub fn detections_to_json_string(boxes: &[Box7]) -> String {
    let doc = Document {
        schema: DETECTIONS_SCHEMA.into(),
        detections: boxes.iter().map(Record::from).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

/// Parses and validates a detections JSON document. Never panics on
/// arbitrary input.
pub fn detections_from_json_str(text: &str) -> Result<Vec<Box7>> {
    const WHAT: &str = "detections json";
    let doc: Document = serde_json::from_str(text)?;
    if doc.schema != DETECTIONS_SCHEMA {
        return format_err(WHAT, format!("unsupported schema {:?}", doc.schema));
    }
    doc.detections
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_box(WHAT, i))
        .collect()
}
