//! Finite-difference checks over every differentiable op, on seeded random
//! instances. Inputs stay clear of kinks (relu at 0, smooth L1 at |d| = 1,
//! max-pool ties) by at least 100 steps so central differences are smooth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::detection::{FocalLossOp, SmoothL1Op};
use crate::error::Result;
use crate::tensor::grad::{
    grad_check, ActivationOp, ChannelPoolOp, Conv2dInput, Conv2dWeights, Differentiable,
    ElementwiseOp, MaxPoolOp, MlpFirstLayer, MlpInput, SpatialPoolOp,
};
use crate::tensor::{Activation, ConvParams, Elementwise, MlpParams, PoolMode, Tensor};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub op: String,
    pub instances: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

fn uniform(c: usize, h: usize, w: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(lo..hi))
}

/// Values with `|v| >= margin`.
fn away_from_zero(c: usize, h: usize, w: usize, margin: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| {
        let m = rng.random_range(margin..2.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced at least `gap` apart, shuffled.
fn distinct(c: usize, h: usize, w: usize, gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = c * h * w;
    let mut vals: Vec<f64> = (0..n)
        .map(|i| i as f64 * gap + rng.random_range(0.0..gap / 4.0))
        .collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_vec(c, h, w, vals).expect("finite values")
}

type Instance = (Box<dyn Differentiable>, Tensor);

fn suite_instance(kind: usize, rng: &mut ChaCha8Rng) -> Instance {
    let margin = 100.0 * GRAD_EPSILON;
    match kind {
        0 => {
            let (h, w) = (rng.random_range(3..7), rng.random_range(3..7));
            let mut target = uniform(2, h, w, 0.0, 0.95, rng);
            target.set(0, h / 2, w / 2, 1.0);
            let pred = uniform(2, h, w, 0.05, 0.95, rng);
            (Box::new(FocalLossOp { target }), pred)
        }
        1 => {
            let (h, w) = (rng.random_range(2..6), rng.random_range(2..6));
            let target = uniform(3, h, w, -2.0, 2.0, rng);
            let offsets = Tensor::from_fn(3, h, w, |_, _, _| {
                let m: f64 = rng.random_range(0.0..2.5);
                let m = if (m - 1.0).abs() < margin {
                    m + 2.0 * margin
                } else {
                    m
                };
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            });
            let pred = target.add(&offsets).expect("same shape");
            let mut mask: Vec<bool> = (0..h * w).map(|_| rng.random_bool(0.6)).collect();
            mask[0] = true;
            (Box::new(SmoothL1Op { target, mask }), pred)
        }
        2 => {
            let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
            let k = [1, 3][rng.random_range(0..2)];
            let mut p = ConvParams::random(co, ci, k, k, true, rng);
            if rng.random_bool(0.5) {
                p = p.same();
            }
            if rng.random_bool(0.3) {
                p = p.with_stride(2);
            }
            let x = uniform(
                ci,
                rng.random_range(4..8),
                rng.random_range(4..8),
                -1.0,
                1.0,
                rng,
            );
            (Box::new(Conv2dInput(p)), x)
        }
        3 => {
            let (ci, co) = (rng.random_range(1..3), rng.random_range(1..3));
            let p = ConvParams::random(co, ci, 3, 3, true, rng)
                .same()
                .with_dilation(rng.random_range(1..3));
            let input = uniform(ci, 5, 6, -1.0, 1.0, rng);
            let op = Conv2dWeights { input, params: p };
            let w = op.weights_tensor();
            (Box::new(op), w)
        }
        4 | 5 => {
            let (i, h, o) = (
                rng.random_range(2..8),
                rng.random_range(1..5),
                rng.random_range(1..6),
            );
            let params = MlpParams::random(i, h, o, rng);
            let x = uniform(i, 1, 1, -1.0, 1.0, rng);
            if kind == 4 {
                (Box::new(MlpInput(params)), x)
            } else {
                let w1 = Tensor::from_vec(params.w1.len(), 1, 1, params.w1.clone())
                    .expect("finite weights");
                (
                    Box::new(MlpFirstLayer {
                        input: x.into_vec(),
                        params,
                    }),
                    w1,
                )
            }
        }
        6..=8 => {
            let act = [Activation::Sigmoid, Activation::Tanh, Activation::Relu][kind - 6];
            let x = if act == Activation::Relu {
                away_from_zero(2, 3, 4, margin, rng)
            } else {
                uniform(2, 3, 4, -4.0, 4.0, rng)
            };
            (Box::new(ActivationOp(act)), x)
        }
        9 | 10 => {
            let mode = [PoolMode::Max, PoolMode::Avg][kind - 9];
            (Box::new(SpatialPoolOp(mode)), distinct(3, 3, 4, 0.01, rng))
        }
        11 | 12 => {
            let mode = [PoolMode::Max, PoolMode::Avg][kind - 11];
            (Box::new(ChannelPoolOp(mode)), distinct(3, 3, 4, 0.01, rng))
        }
        13 => (
            Box::new(MaxPoolOp { k: 2, stride: 2 }),
            distinct(2, 4, 6, 0.01, rng),
        ),
        _ => {
            let kind = [Elementwise::Add, Elementwise::Mul][kind - 14];
            let other = uniform(2, 3, 3, -1.0, 1.0, rng);
            (
                Box::new(ElementwiseOp { kind, other }),
                uniform(2, 3, 3, -1.0, 1.0, rng),
            )
        }
    }
}

const KINDS: usize = 16;

/// Runs `instances` seeded checks per op and reports the worst relative
/// error of each.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::with_capacity(KINDS);
    for kind in 0..KINDS {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let (op, x) = suite_instance(kind, &mut rng);
            worst = worst.max(grad_check(op.as_ref(), &x, GRAD_EPSILON)?);
        }
        let op = match kind {
            0 => "focal_loss".into(),
            1 => "smooth_l1".into(),
            2 => "conv2d(input)".into(),
            3 => "conv2d(weights)".into(),
            4 => "mlp(input)".into(),
            5 => "mlp(w1)".into(),
            6..=8 => format!("activation({})", ["sigmoid", "tanh", "relu"][kind - 6]),
            9 | 10 => format!("pool_spatial({})", ["max", "avg"][kind - 9]),
            11 | 12 => format!("pool_channel({})", ["max", "avg"][kind - 11]),
            13 => "maxpool2d(k=2, s=2)".into(),
            _ => format!("elementwise({})", ["add", "mul"][kind - 14]),
        };
        out.push(GradCheckReport {
            op,
            instances,
            max_rel_error: worst,
        });
    }
    Ok(out)
}
