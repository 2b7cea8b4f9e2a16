//! Range-view projection, surface normals, BEV gridding, and RV-to-BEV transfer.

mod bev;
mod normals;
mod range;

pub use bev::{bev_bin, pillar, pillarize, rv_to_bev, BevCell, BevSpec, Reduce};
pub use normals::surface_normals;
pub use range::{channel, rv_project, RangeImage, RvSpec};
