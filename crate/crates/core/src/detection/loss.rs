use crate::error::{domain_err, shape_err, Result};
use crate::tensor::grad::Differentiable;
use crate::tensor::Tensor;

pub const FOCAL_ALPHA: i32 = 2;
pub const FOCAL_BETA: i32 = 4;

/// Penalty-reduced focal loss over every cell, normalized by
/// `max(1, #cells with target == 1)`. Returns the loss and `dL/dpred`.
///
/// Peak cells contribute `-(1 - p)^a ln p`; all others
/// `-(1 - t)^b p^a ln(1 - p)`.
pub fn focal_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let (terms, grad) = focal_terms(pred, target)?;
    Ok((terms.iter().sum(), grad))
}

/// Normalized per-cell terms of [`focal_loss`] and its gradient. Each term
/// depends only on its own cell.
pub fn focal_terms(pred: &Tensor, target: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    if pred.shape() != target.shape() {
        return shape_err(
            "focal_loss",
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        );
    }
    if let Some(p) = pred.data().iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return domain_err("focal_loss", format!("prediction {p} outside (0, 1)"));
    }
    if let Some(t) = target.data().iter().find(|&&t| !(0.0..=1.0).contains(&t)) {
        return domain_err("focal_loss", format!("target {t} outside [0, 1]"));
    }
    let peaks = target.data().iter().filter(|&&t| t == 1.0).count();
    let norm = peaks.max(1) as f64;
    let mut terms = Vec::with_capacity(pred.len());
    let mut grad = Tensor::zeros(pred.channels(), pred.height(), pred.width());
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let q = 1.0 - p;
        let (l, d) = if t == 1.0 {
            (
                -q.powi(FOCAL_ALPHA) * p.ln(),
                FOCAL_ALPHA as f64 * q.powi(FOCAL_ALPHA - 1) * p.ln() - q.powi(FOCAL_ALPHA) / p,
            )
        } else {
            let wt = (1.0 - t).powi(FOCAL_BETA);
            (
                -wt * p.powi(FOCAL_ALPHA) * q.ln(),
                -wt * (FOCAL_ALPHA as f64 * p.powi(FOCAL_ALPHA - 1) * q.ln()
                    - p.powi(FOCAL_ALPHA) / q),
            )
        };
        terms.push(l / norm);
        *g = d / norm;
    }
    Ok((terms, grad))
}

/// Smooth L1 summed over all channels at cells where `mask` is set,
/// normalized by the number of masked cells. An empty mask gives 0.
pub fn smooth_l1(pred: &Tensor, target: &Tensor, mask: &[bool]) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() || mask.len() != pred.plane() {
        return shape_err(
            "smooth_l1",
            format!(
                "pred {:?}, target {:?}, mask of {}",
                pred.shape(),
                target.shape(),
                mask.len()
            ),
        );
    }
    let count = mask.iter().filter(|&&m| m).count();
    let mut grad = Tensor::zeros(pred.channels(), pred.height(), pred.width());
    if count == 0 {
        return Ok((0.0, grad));
    }
    let n = count as f64;
    let plane = pred.plane();
    let mut loss = 0.0;
    for (i, ((g, &p), &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
        .enumerate()
    {
        if !mask[i % plane] {
            continue;
        }
        let d = p - t;
        if d.abs() < 1.0 {
            loss += 0.5 * d * d;
            *g = d / n;
        } else {
            loss += d.abs() - 0.5;
            *g = d.signum() / n;
        }
    }
    Ok((loss / n, grad))
}

/// Per-cell terms of [`focal_loss`] as a function of the prediction, so a
/// finite difference only sees the perturbed cell's term.
pub struct FocalLossOp {
    pub target: Tensor,
}

impl Differentiable for FocalLossOp {
    fn name(&self) -> String {
        "focal_loss".into()
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(focal_terms(x, &self.target)?.0)
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        let grad = focal_terms(x, &self.target)?.1;
        Tensor::from_vec(
            x.channels(),
            x.height(),
            x.width(),
            grad.data()
                .iter()
                .zip(upstream)
                .map(|(g, u)| g * u)
                .collect(),
        )
    }
}

/// [`smooth_l1`] as a function of the prediction.
pub struct SmoothL1Op {
    pub target: Tensor,
    pub mask: Vec<bool>,
}

impl Differentiable for SmoothL1Op {
    fn name(&self) -> String {
        "smooth_l1".into()
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(vec![smooth_l1(x, &self.target, &self.mask)?.0])
    }

    fn vjp(&self, x: &Tensor, upstream: &[f64]) -> Result<Tensor> {
        Ok(smooth_l1(x, &self.target, &self.mask)?.1.scale(upstream[0]))
    }
}
