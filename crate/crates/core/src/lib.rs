//! Panoptic-guided multi-view fusion for BEV 3D object detection.
//!
//! The crate covers the full data path at desk scale: synthetic LiDAR scenes
//! with an oracle panoptic provider, range-view and BEV projection, cascade
//! RV feature fusion, the three guidance mechanisms (RV-BEV attention,
//! class-wise foreground attention, center density heatmap), an anchor-free
//! center head, and a center-distance mAP evaluator.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod fusion;
pub mod guidance;
pub mod harness;
pub mod projection;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
