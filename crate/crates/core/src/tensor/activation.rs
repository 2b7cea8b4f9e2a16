use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{domain_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

/// Largest double strictly below 1.
pub const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function kept strictly inside `(0, 1)`: for large |v| it
/// saturates at the nearest representable value instead of rounding onto
/// the boundary.
pub fn sigmoid(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

fn tanh_open(v: f64) -> f64 {
    v.tanh().clamp(-BELOW_ONE, BELOW_ONE)
}

impl Activation {
    pub fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => tanh_open(v),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative at `v`; relu uses 0 at the kink.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(v);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    x.map(|v| kind.eval(v))
}

pub fn activation_backward(x: &Tensor, kind: Activation, grad: &Tensor) -> Result<Tensor> {
    if x.shape() != grad.shape() {
        return shape_err("activation_backward", "gradient shape");
    }
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| g * kind.derivative(v))
        .collect();
    Tensor::from_vec(x.channels(), x.height(), x.width(), data)
}

/// Elementwise `ln(1 + x)`, defined only for `x >= 0`.
pub fn log1p_map(x: &Tensor) -> Result<Tensor> {
    if let Some(i) = x.data().iter().position(|v| !(*v >= 0.0)) {
        return domain_err(
            "log1p_map",
            format!("value {} at flat index {i} is negative", x.data()[i]),
        );
    }
    Ok(x.map(f64::ln_1p))
}
