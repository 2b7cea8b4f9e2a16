use crate::error::{shape_err, Result};
use crate::projection::{BevCell, BevSpec};
use crate::scene::Box7;
use crate::tensor::Tensor;

/// Channels of [`HeadOutput::regression`].
pub mod regression {
    /// Center offset from the cell center, in cells.
    pub const DX: usize = 0;
    pub const DY: usize = 1;
    pub const LOG_L: usize = 2;
    pub const LOG_W: usize = 3;
    pub const SIN_YAW: usize = 4;
    pub const COS_YAW: usize = 5;
    pub const COUNT: usize = 6;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// `(K, H, W)` center scores in `(0, 1)`; channel `k` is class `k + 1`.
    pub heatmaps: Tensor,
    /// `(6, H, W)`, see [`regression`].
    pub regression: Tensor,
    /// `(2, H, W)`: center z in meters, log height.
    pub z_h: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box7,
    /// Heatmap cell the detection was decoded from.
    pub cell: BevCell,
}

/// Detections sorted by descending score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn boxes(&self) -> Vec<Box7> {
        self.detections.iter().map(|d| d.bbox).collect()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// Whether `(row, col)` is the first maximum of its 3x3 neighborhood:
/// no neighbor is larger and no earlier (row-major) neighbor is equal.
fn is_peak(map: &[f64], rows: usize, cols: usize, row: usize, col: usize) -> bool {
    let v = map[row * cols + col];
    for r in row.saturating_sub(1)..=(row + 1).min(rows - 1) {
        for c in col.saturating_sub(1)..=(col + 1).min(cols - 1) {
            if (r, c) == (row, col) {
                continue;
            }
            let u = map[r * cols + c];
            if u > v || (u == v && (r, c) < (row, col)) {
                return false;
            }
        }
    }
    true
}

/// Local-maximum decoding: peaks with score >= `score_min`, the `k_max`
/// highest kept. Ties in score order by class, then row, then column.
/// `yaw = atan2(sin, cos)`, which is 0 when both are 0.
pub fn decode(
    head: &HeadOutput,
    grid: &BevSpec,
    k_max: usize,
    score_min: f64,
) -> Result<DetectionSet> {
    grid.validate()?;
    let (k, rows, cols) = head.heatmaps.shape();
    if (rows, cols) != (grid.rows(), grid.cols())
        || head.regression.shape() != (regression::COUNT, rows, cols)
        || head.z_h.shape() != (2, rows, cols)
    {
        return shape_err(
            "decode",
            format!(
                "heatmaps {:?}, regression {:?}, z/h {:?} on a {}x{} grid",
                head.heatmaps.shape(),
                head.regression.shape(),
                head.z_h.shape(),
                grid.rows(),
                grid.cols()
            ),
        );
    }
    let mut peaks = Vec::new();
    for ch in 0..k {
        let map = head.heatmaps.channel(ch);
        for row in 0..rows {
            for col in 0..cols {
                let s = map[row * cols + col];
                if s >= score_min && is_peak(map, rows, cols, row, col) {
                    peaks.push((s, ch, row, col));
                }
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3)))
    });
    peaks.truncate(k_max);

    let reg = |c: usize, row: usize, col: usize| head.regression.get(c, row, col);
    let detections = peaks
        .into_iter()
        .map(|(score, ch, row, col)| {
            let cell = BevCell { row, col };
            let (ccx, ccy) = grid.cell_center(cell);
            let (s, c) = (
                reg(regression::SIN_YAW, row, col),
                reg(regression::COS_YAW, row, col),
            );
            let yaw = if s == 0.0 && c == 0.0 {
                0.0
            } else {
                s.atan2(c)
            };
            Detection {
                bbox: Box7 {
                    cx: ccx + reg(regression::DX, row, col) * grid.cell,
                    cy: ccy + reg(regression::DY, row, col) * grid.cell,
                    cz: head.z_h.get(0, row, col),
                    l: reg(regression::LOG_L, row, col).exp(),
                    w: reg(regression::LOG_W, row, col).exp(),
                    h: head.z_h.get(1, row, col).exp(),
                    yaw,
                    class_id: ch as u32 + 1,
                    score,
                },
                cell,
            }
        })
        .collect();
    Ok(DetectionSet { detections })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(rows: usize, cols: usize, k: usize) -> HeadOutput {
        HeadOutput {
            heatmaps: Tensor::zeros(k, rows, cols),
            regression: Tensor::zeros(regression::COUNT, rows, cols),
            z_h: Tensor::zeros(2, rows, cols),
        }
    }

    fn grid(n: usize) -> BevSpec {
        BevSpec::square(n as f64 / 2.0, 1.0)
    }

    #[test]
    fn single_cell_decodes_at_cell_center() {
        let mut h = head(8, 8, 1);
        h.heatmaps.set(0, 3, 5, 1.0);
        let d = decode(&h, &grid(8), 10, 0.5).unwrap();
        assert_eq!(d.len(), 1);
        let b = d.detections[0].bbox;
        assert_eq!((b.cx, b.cy, b.yaw), (1.5, -0.5, 0.0));
        assert_eq!((b.l, b.w, b.h), (1.0, 1.0, 1.0));
    }

    #[test]
    fn k_max_keeps_highest() {
        let mut h = head(8, 8, 1);
        h.heatmaps.set(0, 1, 1, 0.9);
        h.heatmaps.set(0, 6, 6, 0.8);
        let d = decode(&h, &grid(8), 1, 0.1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.detections[0].bbox.score, 0.9);
    }

    #[test]
    fn plateau_yields_one_peak() {
        let mut h = head(6, 6, 1);
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            h.heatmaps.set(0, r, c, 0.7);
        }
        let d = decode(&h, &grid(6), 10, 0.1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.detections[0].cell, BevCell { row: 2, col: 2 });
    }
}
