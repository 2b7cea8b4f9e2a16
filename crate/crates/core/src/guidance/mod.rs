//! Guidance mechanisms: RV-BEV attention weighting, class-wise foreground
//! attention, and the center density heatmap.

mod attention;
mod density;

pub use attention::{
    class_foreground_attention, rv_bev_attention, rv_bev_attention_traced, ClassAttnParams,
    RvBevAttnParams, RvBevTrace,
};
pub use density::{
    apply_density, center_density, density_value, parse_pgm16, DensityHeatmap, Pgm16,
};
