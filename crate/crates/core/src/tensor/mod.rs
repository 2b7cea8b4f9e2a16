//! Dense `(channels, height, width)` tensors and the numeric kernels built on them.
//!
//! Every kernel is a pure function of its arguments. Kernels that may run on
//! several threads partition work by output element, so results are
//! bit-identical for any thread count.

mod activation;
mod conv;
pub mod grad;
mod layout;
mod mlp;
mod pool;

pub use activation::{activation, activation_backward, log1p_map, sigmoid, Activation, BELOW_ONE};
pub use conv::{conv2d, conv2d_backward, conv_transpose2d_x2, ConvGrads, ConvParams};
pub use layout::{depth2space, space2depth};
pub use mlp::{mlp, mlp_backward, MlpGrads, MlpParams};
pub use pool::{
    maxpool2d, maxpool2d_backward, pool_channel, pool_channel_backward, pool_spatial,
    pool_spatial_backward, PoolMode,
};

use crate::error::{domain_err, shape_err, Result};

/// Row-major `(c, y, x)` array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::full(channels, height, width, 0.0)
    }

    pub fn full(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return shape_err(
                "Tensor::from_vec",
                format!(
                    "{} values for shape {}x{}x{}",
                    data.len(),
                    channels,
                    height,
                    width
                ),
            );
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return domain_err(
                "Tensor::from_vec",
                format!("non-finite value at flat index {i}"),
            );
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(c, y, x)` at every element.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    /// Copies channels `range` into a new tensor.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Result<Tensor> {
        if range.start > range.end || range.end > self.channels {
            return shape_err(
                "Tensor::slice_channels",
                format!("range {range:?} of {} channels", self.channels),
            );
        }
        let p = self.plane();
        Ok(Tensor {
            channels: range.len(),
            height: self.height,
            width: self.width,
            data: self.data[range.start * p..range.end * p].to_vec(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Concatenates along the channel axis.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return shape_err("concat", "no inputs");
        };
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for t in parts {
            if (t.height, t.width) != (h, w) {
                return shape_err(
                    "concat",
                    format!("spatial {}x{} vs {}x{}", t.height, t.width, h, w),
                );
            }
            channels += t.channels;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            channels,
            height: h,
            width: w,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return shape_err(op, format!("{:?} vs {:?}", self.shape(), other.shape()));
        }
        Ok(Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// Multiplies every channel by the single-channel `map`.
    pub fn mul_plane(&self, map: &Tensor) -> Result<Tensor> {
        if map.channels != 1 || (map.height, map.width) != (self.height, self.width) {
            return shape_err(
                "mul_plane",
                format!("map {:?} for tensor {:?}", map.shape(), self.shape()),
            );
        }
        let mut out = self.clone();
        let p = self.plane();
        for c in 0..self.channels {
            for (v, m) in out.data[c * p..(c + 1) * p].iter_mut().zip(&map.data) {
                *v *= m;
            }
        }
        Ok(out)
    }

    /// Multiplies channel `c` by `weights[c]`.
    pub fn mul_channels(&self, weights: &[f64]) -> Result<Tensor> {
        if weights.len() != self.channels {
            return shape_err(
                "mul_channels",
                format!("{} weights for {} channels", weights.len(), self.channels),
            );
        }
        let mut out = self.clone();
        let p = self.plane();
        for (c, w) in weights.iter().enumerate() {
            out.data[c * p..(c + 1) * p]
                .iter_mut()
                .for_each(|v| *v *= w);
        }
        Ok(out)
    }
}

/// Elementwise binary ops with analytic backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
}

impl Elementwise {
    pub fn apply(self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        match self {
            Elementwise::Add => a.add(b),
            Elementwise::Mul => a.mul(b),
        }
    }

    /// Gradient with respect to `a`, holding `b` fixed.
    pub fn backward_lhs(self, b: &Tensor, grad: &Tensor) -> Result<Tensor> {
        match self {
            Elementwise::Add => {
                if grad.shape() != b.shape() {
                    return shape_err("elementwise backward", "gradient shape");
                }
                Ok(grad.clone())
            }
            Elementwise::Mul => grad.mul(b),
        }
    }
}
