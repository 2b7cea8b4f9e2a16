use serde::{Deserialize, Serialize};

use super::head::{regression, HeadOutput};
use crate::error::{domain_err, Result};
use crate::projection::{BevCell, BevSpec};
use crate::scene::Box7;
use crate::tensor::{Tensor, BELOW_ONE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// Minimum IoU a box shifted by the radius must keep with the original.
    pub min_overlap: f64,
    /// Radius floor, in cells.
    pub min_radius: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            min_overlap: 0.1,
            min_radius: 2,
        }
    }
}

/// Splat radius in cells for an `l x w` footprint: the smallest root of the
/// three CenterNet min-overlap quadratics, each taken as `(b + sqrt(b² - 4ac)) / 2`.
pub fn gaussian_radius(l: f64, w: f64, min_overlap: f64) -> f64 {
    let o = min_overlap;
    let root = |a: f64, b: f64, c: f64| (b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / 2.0;
    let r1 = root(1.0, l + w, w * l * (1.0 - o) / (1.0 + o));
    let r2 = root(4.0, 2.0 * (l + w), (1.0 - o) * w * l);
    let r3 = root(4.0 * o, -2.0 * o * (l + w), (o - 1.0) * w * l);
    r1.min(r2).min(r3)
}

impl TargetConfig {
    pub fn radius(&self, b: &Box7, grid: &BevSpec) -> usize {
        let r = gaussian_radius(b.l / grid.cell, b.w / grid.cell, self.min_overlap);
        (r.max(0.0).floor() as usize).max(self.min_radius)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTargets {
    /// `(K, rows, cols)`; channel `k` holds class `k + 1`.
    pub heatmap: Tensor,
    /// Boxes whose center falls outside the grid.
    pub skipped: usize,
}

/// Cells of the `(2r + 1)²` window around `c` that lie on the grid.
fn window(
    c: BevCell,
    r: usize,
    rows: usize,
    cols: usize,
) -> impl Iterator<Item = (usize, usize, f64, f64)> {
    let (r0, r1) = (c.row.saturating_sub(r), (c.row + r).min(rows - 1));
    let (c0, c1) = (c.col.saturating_sub(r), (c.col + r).min(cols - 1));
    (r0..=r1).flat_map(move |row| {
        (c0..=c1).map(move |col| {
            (
                row,
                col,
                row as f64 - c.row as f64,
                col as f64 - c.col as f64,
            )
        })
    })
}

fn check_class(b: &Box7, k: usize) -> Result<usize> {
    if b.class_id == 0 || b.class_id as usize > k {
        return domain_err(
            "gaussian_targets",
            format!("box class {} outside 1..={k}", b.class_id),
        );
    }
    Ok(b.class_id as usize - 1)
}

pub fn gaussian_targets(boxes: &[Box7], grid: &BevSpec, k: usize) -> Result<GaussianTargets> {
    gaussian_targets_with(boxes, grid, k, &TargetConfig::default())
}

/// Splats a peak-1 Gaussian with `sigma = (2r + 1) / 6` at each box's
/// center cell; overlapping splats combine by max.
pub fn gaussian_targets_with(
    boxes: &[Box7],
    grid: &BevSpec,
    k: usize,
    cfg: &TargetConfig,
) -> Result<GaussianTargets> {
    grid.validate()?;
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut heatmap = Tensor::zeros(k, rows, cols);
    let mut skipped = 0;
    for b in boxes {
        let ch = check_class(b, k)?;
        let Some(center) = grid.bin_xy(b.cx, b.cy) else {
            skipped += 1;
            continue;
        };
        let r = cfg.radius(b, grid);
        let sigma = (2 * r + 1) as f64 / 6.0;
        for (row, col, dy, dx) in window(center, r, rows, cols) {
            let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            let i = heatmap.index(ch, row, col);
            let cell = &mut heatmap.data_mut()[i];
            *cell = cell.max(v);
        }
    }
    Ok(GaussianTargets { heatmap, skipped })
}

/// Builds the head output that decodes to `boxes`: heatmaps are the
/// Gaussian targets (kept inside `(0, 1)`), and every cell of each box's
/// Gaussian window carries that box's exact regression, the nearest center
/// winning where windows overlap.
pub fn encode(boxes: &[Box7], grid: &BevSpec, k: usize, cfg: &TargetConfig) -> Result<HeadOutput> {
    let targets = gaussian_targets_with(boxes, grid, k, cfg)?;
    let (rows, cols) = (grid.rows(), grid.cols());
    let heatmaps = targets
        .heatmap
        .map(|v| v.clamp(f64::MIN_POSITIVE, BELOW_ONE));
    let mut reg = Tensor::zeros(regression::COUNT, rows, cols);
    let mut zh = Tensor::zeros(2, rows, cols);
    let mut owner_dist = vec![f64::INFINITY; rows * cols];
    for b in boxes {
        let Some(center) = grid.bin_xy(b.cx, b.cy) else {
            continue;
        };
        let r = cfg.radius(b, grid);
        for (row, col, _, _) in window(center, r, rows, cols) {
            let (ccx, ccy) = grid.cell_center(BevCell { row, col });
            let d = (b.cx - ccx).hypot(b.cy - ccy);
            let flat = row * cols + col;
            if d >= owner_dist[flat] {
                continue;
            }
            owner_dist[flat] = d;
            let (s, c) = b.yaw.sin_cos();
            let vals = [
                (b.cx - ccx) / grid.cell,
                (b.cy - ccy) / grid.cell,
                b.l.ln(),
                b.w.ln(),
                s,
                c,
            ];
            for (ch, v) in vals.into_iter().enumerate() {
                reg.set(ch, row, col, v);
            }
            zh.set(0, row, col, b.cz);
            zh.set(1, row, col, b.h.ln());
        }
    }
    Ok(HeadOutput {
        heatmaps,
        regression: reg,
        z_h: zh,
    })
}
