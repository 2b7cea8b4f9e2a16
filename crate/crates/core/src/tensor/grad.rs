//! Central finite-difference checking of analytic gradients.
//!
//! An op exposes a flattened forward map and a vector-Jacobian product. The
//! checker contracts the output with a fixed upstream vector, perturbs each
//! input element by `±epsilon`, and compares the numeric derivative with the
//! analytic one. The output difference is formed element by element before
//! contracting, so untouched outputs cancel exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    activation, activation_backward, conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, mlp,
    mlp_backward, pool_channel, pool_channel_backward, pool_spatial, pool_spatial_backward,
    Activation, ConvParams, Elementwise, MlpParams, PoolMode, Tensor,
};
use crate::error::{shape_err, Error, Result};

/// Denominator floor in the relative error.
pub const REL_FLOOR: f64 = 1e-8;

/// Seed of the upstream vector used by [`grad_check`].
const UPSTREAM_SEED: u64 = 0x5eed_9a0d;

pub trait Differentiable {
    fn name(&self) -> String;

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>>;

    /// Gradient of `upstream · forward(x)` with respect to `x`.
    fn vjp(&self, _x: &Tensor, _upstream: &[f64]) -> Result<Tensor> {
        Err(Error::NoBackward(self.name()))
    }
}

/// Checks `op` at `x` against a fixed pseudo-random upstream vector
/// (a scalar-valued op gets upstream `[1.0]`). Returns the maximum
/// relative error `|a - n| / max(|a|, |n|, 1e-8)` over input elements.
pub fn grad_check(op: &dyn Differentiable, x: &Tensor, epsilon: f64) -> Result<f64> {
    let n_out = op.forward(x)?.len();
    let upstream: Vec<f64> = if n_out == 1 {
        vec![1.0]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(UPSTREAM_SEED);
        (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    grad_check_with(op, x, epsilon, &upstream)
}

pub fn grad_check_with(
    op: &dyn Differentiable,
    x: &Tensor,
    epsilon: f64,
    upstream: &[f64],
) -> Result<f64> {
    let analytic = op.vjp(x, upstream)?;
    if analytic.shape() != x.shape() {
        return shape_err("grad_check", "analytic gradient shape differs from input");
    }
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let plus = op.forward(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let minus = op.forward(&probe)?;
        probe.data_mut()[i] = orig;
        if plus.len() != upstream.len() || minus.len() != upstream.len() {
            return shape_err("grad_check", "upstream length differs from output");
        }
        let numeric = plus
            .iter()
            .zip(&minus)
            .zip(upstream)
            .map(|((p, m), u)| u * (p - m))
            .sum::<f64>()
            / (2.0 * epsilon);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn upstream_tensor(shape: (usize, usize, usize), upstream: &[f64]) -> Result<Tensor> {
    Tensor::from_vec(shape.0, shape.1, shape.2, upstream.to_vec())
}

/// `conv2d` as a function of its input.
pub struct Conv2dInput(pub ConvParams);

impl Differentiable for Conv2dInput {
    fn name(&self) -> String {
        "conv2d(input)".into()
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(conv2d(x, &self.0)?.into_vec())
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let (oh, ow) = self.0.output_dims(x.height(), x.width())?;
        let g = upstream_tensor((self.0.out_ch, oh, ow), upstream)?;
        Ok(conv2d_backward(x, &self.0, &g)?.input)
    }
}

/// `conv2d` as a function of its weights, flattened into a `(n, 1, 1)` tensor.
pub struct Conv2dWeights {
    pub input: Tensor,
    pub params: ConvParams,
}

impl Conv2dWeights {
    fn with_weights(&self, w: &Tensor) -> ConvParams {
        let mut p = self.params.clone();
        p.weights = w.data().to_vec();
        p
    }

    pub fn weights_tensor(&self) -> Tensor {
        let w = self.params.weights.clone();
        Tensor::from_vec(w.len(), 1, 1, w).expect("finite weights")
    }
}

impl Differentiable for Conv2dWeights {
    fn name(&self) -> String {
        "conv2d(weights)".into()
    }

    fn forward(&self, w: &Tensor) -> Result<Vec<f64>> {
        Ok(conv2d(&self.input, &self.with_weights(w))?.into_vec())
    }

    fn vjp(&self, w: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let p = self.with_weights(w);
        let (oh, ow) = p.output_dims(self.input.height(), self.input.width())?;
        let g = upstream_tensor((p.out_ch, oh, ow), upstream)?;
        let gw = conv2d_backward(&self.input, &p, &g)?.weights;
        Tensor::from_vec(gw.len(), 1, 1, gw)
    }
}

/// MLP over the flattened input tensor.
pub struct MlpInput(pub MlpParams);

impl Differentiable for MlpInput {
    fn name(&self) -> String {
        "mlp(input)".into()
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        mlp(x.data(), &self.0)
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let g = mlp_backward(x.data(), &self.0, upstream)?.input;
        Tensor::from_vec(x.channels(), x.height(), x.width(), g)
    }
}

/// MLP as a function of its first-layer weights.
pub struct MlpFirstLayer {
    pub input: Vec<f64>,
    pub params: MlpParams,
}

impl Differentiable for MlpFirstLayer {
    fn name(&self) -> String {
        "mlp(w1)".into()
    }

    fn forward(&self, w: &Tensor) -> Result<Vec<f64>> {
        let mut p = self.params.clone();
        p.w1 = w.data().to_vec();
        mlp(&self.input, &p)
    }

    fn vjp(&self, w: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let mut p = self.params.clone();
        p.w1 = w.data().to_vec();
        let g = mlp_backward(&self.input, &p, upstream)?.w1;
        Tensor::from_vec(g.len(), 1, 1, g)
    }
}

pub struct ActivationOp(pub Activation);

impl Differentiable for ActivationOp {
    fn name(&self) -> String {
        format!("{:?}", self.0).to_lowercase()
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(activation(x, self.0).into_vec())
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        activation_backward(x, self.0, &upstream_tensor(x.shape(), upstream)?)
    }
}

pub struct SpatialPoolOp(pub PoolMode);

impl Differentiable for SpatialPoolOp {
    fn name(&self) -> String {
        format!("pool_spatial({:?})", self.0)
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        pool_spatial(x, self.0)
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        pool_spatial_backward(x, self.0, upstream)
    }
}

pub struct ChannelPoolOp(pub PoolMode);

impl Differentiable for ChannelPoolOp {
    fn name(&self) -> String {
        format!("pool_channel({:?})", self.0)
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(pool_channel(x, self.0)?.into_vec())
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let g = upstream_tensor((1, x.height(), x.width()), upstream)?;
        pool_channel_backward(x, self.0, &g)
    }
}

pub struct MaxPoolOp {
    pub k: usize,
    pub stride: usize,
}

impl Differentiable for MaxPoolOp {
    fn name(&self) -> String {
        format!("maxpool2d(k={}, s={})", self.k, self.stride)
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(maxpool2d(x, self.k, self.stride)?.into_vec())
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let y = maxpool2d(x, self.k, self.stride)?;
        maxpool2d_backward(
            x,
            self.k,
            self.stride,
            &upstream_tensor(y.shape(), upstream)?,
        )
    }
}

/// `x ⊙ other` or `x + other` as a function of `x`.
pub struct ElementwiseOp {
    pub kind: Elementwise,
    pub other: Tensor,
}

impl Differentiable for ElementwiseOp {
    fn name(&self) -> String {
        format!("elementwise({:?})", self.kind)
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.kind.apply(x, &self.other)?.into_vec())
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        self.kind
            .backward_lhs(&self.other, &upstream_tensor(x.shape(), upstream)?)
    }
}
