//! Configuration, evaluation and end-to-end runs.

mod config;
mod eval;
mod gradcheck;
mod metrics;
mod pipeline;

pub use config::{HeadConfig, ModelConfig, RunConfig, Toggles};
pub use eval::{
    evaluate, match_and_ap, rank_order, ApResult, Counts, EvalResult, DISTANCE_THRESHOLDS,
    MIN_PRECISION, MIN_RECALL,
};
pub use gradcheck::{gradcheck_suite, GradCheckReport, GRAD_EPSILON, GRAD_TOLERANCE};
pub use metrics::{
    fmt_f64, to_json_sig17, without_timestamp, AblationMetrics, AblationRowMetrics, RowMetrics,
    RunMetrics, METRICS_SCHEMA,
};
pub use pipeline::{
    ablate, density_peaks_at_centers, eval_scene, evaluate_rows, run_pipeline, scene_seed,
    AblationRow, AblationTable, Diagnostics, Model, PipelineOutput, RowResult, RunReport,
};
