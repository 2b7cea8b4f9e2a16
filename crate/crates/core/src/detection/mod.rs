//! Mini BEV backbone and the anchor-free center head: Gaussian targets,
//! losses, decoding, and detection I/O.

mod backbone;
mod head;
mod io;
mod loss;
mod probe;
mod targets;

pub use backbone::{mini_backbone, MiniBackbone};
pub use head::{decode, regression, Detection, DetectionSet, HeadOutput};
pub use io::{
    detections_from_csv_str, detections_from_json_str, detections_to_csv_string,
    detections_to_json_string, read_detections_csv, write_detections_csv, DETECTIONS_SCHEMA,
};
pub use loss::{
    focal_loss, focal_terms, smooth_l1, FocalLossOp, SmoothL1Op, FOCAL_ALPHA, FOCAL_BETA,
};
pub use probe::{LinearProbe, RidgeAccumulator};
pub use targets::{
    encode, gaussian_radius, gaussian_targets, gaussian_targets_with, GaussianTargets, TargetConfig,
};
