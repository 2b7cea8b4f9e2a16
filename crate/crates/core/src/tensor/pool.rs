use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{domain_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

/// Position of the first maximum; ties resolve to the lowest index.
fn argmax_first(v: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

fn non_empty(x: &Tensor, op: &'static str) -> Result<()> {
    if x.is_empty() {
        return shape_err(op, "empty tensor");
    }
    Ok(())
}

/// Reduces each channel over all pixels, giving one value per channel.
pub fn pool_spatial(x: &Tensor, mode: PoolMode) -> Result<Vec<f64>> {
    non_empty(x, "pool_spatial")?;
    let n = x.plane() as f64;
    Ok((0..x.channels())
        .map(|c| {
            let ch = x.channel(c);
            match mode {
                PoolMode::Max => argmax_first(ch.iter().copied()).1,
                PoolMode::Avg => ch.iter().sum::<f64>() / n,
            }
        })
        .collect())
}

pub fn pool_spatial_backward(x: &Tensor, mode: PoolMode, grad: &[f64]) -> Result<Tensor> {
    non_empty(x, "pool_spatial_backward")?;
    if grad.len() != x.channels() {
        return shape_err("pool_spatial_backward", "gradient length != channels");
    }
    let n = x.plane() as f64;
    let mut gx = Tensor::zeros(x.channels(), x.height(), x.width());
    for (c, &g) in grad.iter().enumerate() {
        match mode {
            PoolMode::Max => {
                let (i, _) = argmax_first(x.channel(c).iter().copied());
                gx.channel_mut(c)[i] = g;
            }
            PoolMode::Avg => gx.channel_mut(c).iter_mut().for_each(|v| *v = g / n),
        }
    }
    Ok(gx)
}

/// Reduces across channels at each pixel, giving a `(1, H, W)` map.
pub fn pool_channel(x: &Tensor, mode: PoolMode) -> Result<Tensor> {
    non_empty(x, "pool_channel")?;
    let (c, h, w) = x.shape();
    let p = x.plane();
    let data = (0..p)
        .map(|i| {
            let column = (0..c).map(|ch| x.data()[ch * p + i]);
            match mode {
                PoolMode::Max => argmax_first(column).1,
                PoolMode::Avg => column.sum::<f64>() / c as f64,
            }
        })
        .collect();
    Tensor::from_vec(1, h, w, data)
}

pub fn pool_channel_backward(x: &Tensor, mode: PoolMode, grad: &Tensor) -> Result<Tensor> {
    non_empty(x, "pool_channel_backward")?;
    let (c, h, w) = x.shape();
    if grad.shape() != (1, h, w) {
        return shape_err("pool_channel_backward", "gradient must be (1, H, W)");
    }
    let p = x.plane();
    let mut gx = Tensor::zeros(c, h, w);
    for i in 0..p {
        let g = grad.data()[i];
        match mode {
            PoolMode::Max => {
                let (ch, _) = argmax_first((0..c).map(|ch| x.data()[ch * p + i]));
                gx.data_mut()[ch * p + i] = g;
            }
            PoolMode::Avg => {
                for ch in 0..c {
                    gx.data_mut()[ch * p + i] = g / c as f64;
                }
            }
        }
    }
    Ok(gx)
}

fn maxpool_dims(x: &Tensor, k: usize, stride: usize) -> Result<(usize, usize)> {
    if k == 0 || stride == 0 {
        return domain_err("maxpool2d", "window and stride must be >= 1");
    }
    if k > x.height() || k > x.width() {
        return shape_err(
            "maxpool2d",
            format!("window {k} larger than input {}x{}", x.height(), x.width()),
        );
    }
    Ok(((x.height() - k) / stride + 1, (x.width() - k) / stride + 1))
}

/// Windowed max without padding; the first maximal cell in row-major order
/// is the one selected (this is where backward routes gradient).
fn window_argmax(
    x: &Tensor,
    c: usize,
    oy: usize,
    ox: usize,
    k: usize,
    stride: usize,
) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for dy in 0..k {
        for dx in 0..k {
            let i = x.index(c, oy * stride + dy, ox * stride + dx);
            let v = x.data()[i];
            if v > best.1 {
                best = (i, v);
            }
        }
    }
    best
}

pub fn maxpool2d(x: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let (oh, ow) = maxpool_dims(x, k, stride)?;
    Ok(Tensor::from_fn(x.channels(), oh, ow, |c, oy, ox| {
        window_argmax(x, c, oy, ox, k, stride).1
    }))
}

pub fn maxpool2d_backward(x: &Tensor, k: usize, stride: usize, grad: &Tensor) -> Result<Tensor> {
    let (oh, ow) = maxpool_dims(x, k, stride)?;
    if grad.shape() != (x.channels(), oh, ow) {
        return shape_err("maxpool2d_backward", "gradient shape");
    }
    let mut gx = Tensor::zeros(x.channels(), x.height(), x.width());
    for c in 0..x.channels() {
        for oy in 0..oh {
            for ox in 0..ow {
                let (i, _) = window_argmax(x, c, oy, ox, k, stride);
                gx.data_mut()[i] += grad.get(c, oy, ox);
            }
        }
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor {
        Tensor::from_fn(1, 4, 4, |_, y, x| (y * 4 + x) as f64)
    }

    #[test]
    fn constant_pools_to_constant() {
        let x = Tensor::full(3, 2, 5, -1.25);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            assert_eq!(pool_spatial(&x, mode).unwrap(), vec![-1.25; 3]);
            assert!(pool_channel(&x, mode)
                .unwrap()
                .data()
                .iter()
                .all(|&v| v == -1.25));
        }
    }

    #[test]
    fn hand_enumerated_spatial_pools() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool_spatial(&x, PoolMode::Max).unwrap(), vec![4.0]);
        assert_eq!(pool_spatial(&x, PoolMode::Avg).unwrap(), vec![2.5]);
    }

    #[test]
    fn single_channel_pool_is_identity() {
        let x = ramp();
        assert_eq!(pool_channel(&x, PoolMode::Max).unwrap(), x);
        assert_eq!(pool_channel(&x, PoolMode::Avg).unwrap(), x);
    }

    #[test]
    fn empty_rejected() {
        assert!(pool_spatial(&Tensor::zeros(0, 2, 2), PoolMode::Max).is_err());
        assert!(pool_channel(&Tensor::zeros(2, 0, 2), PoolMode::Avg).is_err());
    }

    #[test]
    fn maxpool_ramp() {
        let y = maxpool2d(&ramp(), 2, 2).unwrap();
        assert_eq!(y.shape(), (1, 2, 2));
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!(maxpool2d(&ramp(), 1, 1).unwrap(), ramp());
        let c = Tensor::full(2, 4, 4, 3.0);
        assert!(maxpool2d(&c, 2, 2)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 3.0));
        assert!(maxpool2d(&ramp(), 5, 1).is_err());
        assert!(maxpool2d(&ramp(), 2, 0).is_err());
    }

    #[test]
    fn maxpool_backward_routes_to_first_max() {
        let x = Tensor::full(1, 2, 2, 1.0);
        let g = Tensor::full(1, 1, 1, 2.0);
        let gx = maxpool2d_backward(&x, 2, 2, &g).unwrap();
        assert_eq!(gx.data(), &[2.0, 0.0, 0.0, 0.0]);
    }
}
