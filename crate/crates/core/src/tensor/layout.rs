use super::Tensor;
use crate::error::{shape_err, Result};

/// Moves each 2x2 spatial block into channels: `(C, H, W) -> (4C, H/2, W/2)`.
///
/// Output channel `4c + 2dy + dx` holds input channel `c` at offset `(dy, dx)`
/// within each block, so for a single-channel 4x4 ramp `0..16` channel 0 is
/// `[[0, 2], [8, 10]]` and channel 3 is `[[5, 7], [13, 15]]`.
pub fn space2depth(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return shape_err("space2depth", format!("spatial dims {h}x{w} must be even"));
    }
    let (oh, ow) = (h / 2, w / 2);
    Ok(Tensor::from_fn(4 * c, oh, ow, |oc, y, xx| {
        let (src, dy, dx) = (oc / 4, (oc % 4) / 2, oc % 2);
        x.get(src, 2 * y + dy, 2 * xx + dx)
    }))
}

/// Exact inverse of [`space2depth`].
pub fn depth2space(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.shape();
    if c % 4 != 0 {
        return shape_err("depth2space", format!("{c} channels not divisible by 4"));
    }
    Ok(Tensor::from_fn(c / 4, 2 * h, 2 * w, |oc, y, xx| {
        x.get(4 * oc + 2 * (y % 2) + xx % 2, y / 2, xx / 2)
    }))
}
