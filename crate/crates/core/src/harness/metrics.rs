//! Versioned metrics documents. Floats are written with 17 significant
//! digits so they round-trip exactly; `timestamp` is the only field that
//! differs between identical runs.

use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::{RunConfig, Toggles};
use super::eval::EvalResult;
use super::pipeline::{AblationTable, Diagnostics, RowResult, RunReport};
use crate::error::Result;

pub const METRICS_SCHEMA: &str = "pgf-metrics/1";

/// `v` with 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // JSON has no non-finite numbers; serde_json writes them as null.
        "null".into()
    }
}

struct SigFigs<'a>(PrettyFormatter<'a>);

impl Formatter for SigFigs<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with every float at 17 significant digits.
pub fn to_json_sig17<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigs(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("plain data serializes");
    String::from_utf8(buf).expect("utf-8 output")
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RowMetrics {
    pub label: String,
    pub toggles: Toggles,
    #[serde(flatten)]
    pub eval: EvalResult,
}

impl From<&RowResult> for RowMetrics {
    fn from(r: &RowResult) -> Self {
        Self {
            label: r.toggles.label(),
            toggles: r.toggles,
            eval: r.eval.clone(),
        }
    }
}

/// Output of `run` and `eval`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub schema: &'static str,
    pub benchmark: String,
    pub seed: u64,
    pub scenes: usize,
    pub configured: RowMetrics,
    pub baseline: Option<RowMetrics>,
    /// `configured.map - baseline.map`.
    pub delta_map: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunMetrics {
    pub fn from_report(cfg: &RunConfig, report: &RunReport) -> Self {
        Self {
            schema: METRICS_SCHEMA,
            benchmark: cfg.benchmark.clone(),
            seed: cfg.seed,
            scenes: cfg.scenes,
            configured: (&report.configured).into(),
            baseline: Some((&report.baseline).into()),
            delta_map: Some(report.delta_map()),
            diagnostics: Some(report.diagnostics),
            timestamp: unix_seconds(),
        }
    }

    /// Metrics of externally produced detections, with no baseline.
    pub fn from_eval(benchmark: &str, seed: u64, eval: EvalResult, scenes: usize) -> Self {
        Self {
            schema: METRICS_SCHEMA,
            benchmark: benchmark.into(),
            seed,
            scenes,
            configured: RowMetrics {
                label: "external".into(),
                toggles: Toggles::default(),
                eval,
            },
            baseline: None,
            delta_map: None,
            diagnostics: None,
            timestamp: unix_seconds(),
        }
    }

    pub fn to_json_string(&self) -> String {
        to_json_sig17(self)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRowMetrics {
    pub label: String,
    pub toggles: Toggles,
    pub mean_map: f64,
    pub per_seed: Vec<f64>,
}

/// Output of `ablate`.
#[derive(Debug, Clone, Serialize)]
pub struct AblationMetrics {
    pub schema: &'static str,
    pub benchmark: String,
    pub seeds: Vec<u64>,
    pub scenes: usize,
    pub rows: Vec<AblationRowMetrics>,
    pub mba_deltas: Vec<f64>,
    pub cfa_deltas: Vec<f64>,
    pub cdh_deltas: Vec<f64>,
    /// Whether mean mAP never decreases down the rows. Reported, not required.
    pub monotone: bool,
    pub timestamp: u64,
}

impl AblationMetrics {
    pub fn new(cfg: &RunConfig, table: &AblationTable) -> Self {
        Self {
            schema: METRICS_SCHEMA,
            benchmark: cfg.benchmark.clone(),
            seeds: table.seeds.clone(),
            scenes: cfg.scenes,
            rows: table
                .rows
                .iter()
                .map(|r| AblationRowMetrics {
                    label: r.toggles.label(),
                    toggles: r.toggles,
                    mean_map: r.mean(),
                    per_seed: r.per_seed.clone(),
                })
                .collect(),
            mba_deltas: table.mba_deltas(),
            cfa_deltas: table.cfa_deltas(),
            cdh_deltas: table.cdh_deltas(),
            monotone: table.monotone(),
            timestamp: unix_seconds(),
        }
    }

    pub fn to_json_string(&self) -> String {
        to_json_sig17(self)
    }
}

/// Drops the `timestamp` field so two documents can be compared.
pub fn without_timestamp(json: &str) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timestamp");
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        let vals = vec![0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0];
        let text = to_json_sig17(&vals);
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vals);
        assert!(text.contains("1.0000000000000001e-1"));
    }

    #[test]
    fn timestamp_is_stripped() {
        let v = without_timestamp(r#"{"a": 1, "timestamp": 5}"#).unwrap();
        assert_eq!(v, serde_json::json!({"a": 1}));
    }
}
