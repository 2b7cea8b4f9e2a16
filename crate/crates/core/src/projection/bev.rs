use serde::{Deserialize, Serialize};

use super::range::RangeImage;
use crate::error::{domain_err, shape_err, Result};
use crate::scene::Point;
use crate::tensor::Tensor;

/// Axis-aligned BEV grid with half-open cells. `x` indexes columns, `y` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell: f64,
}

impl Default for BevSpec {
    fn default() -> Self {
        Self::square(25.6, 0.4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BevCell {
    pub row: usize,
    pub col: usize,
}

fn cell_count(lo: f64, hi: f64, cell: f64) -> Option<usize> {
    let n = (hi - lo) / cell;
    let r = n.round();
    ((n - r).abs() < 1e-6 && r >= 1.0).then_some(r as usize)
}

impl BevSpec {
    /// Grid over `[-half, half]²`.
    pub fn square(half: f64, cell: f64) -> Self {
        Self {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
            cell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell > 0.0) || !self.cell.is_finite() {
            return domain_err("BevSpec", format!("cell size {}", self.cell));
        }
        if cell_count(self.x_min, self.x_max, self.cell).is_none()
            || cell_count(self.y_min, self.y_max, self.cell).is_none()
        {
            return domain_err(
                "BevSpec",
                format!(
                    "extent [{}, {}] x [{}, {}] is not a whole number of {} m cells",
                    self.x_min, self.x_max, self.y_min, self.y_max, self.cell
                ),
            );
        }
        Ok(())
    }

    pub fn cols(&self) -> usize {
        cell_count(self.x_min, self.x_max, self.cell).unwrap_or(0)
    }

    pub fn rows(&self) -> usize {
        cell_count(self.y_min, self.y_max, self.cell).unwrap_or(0)
    }

    /// Same extent with cells `factor` times smaller.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            cell: self.cell / factor as f64,
            ..*self
        }
    }

    pub fn bin_xy(&self, x: f64, y: f64) -> Option<BevCell> {
        if !(x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max) {
            return None;
        }
        let col = ((x - self.x_min) / self.cell).floor() as usize;
        let row = ((y - self.y_min) / self.cell).floor() as usize;
        (col < self.cols() && row < self.rows()).then_some(BevCell { row, col })
    }

    pub fn flat(&self, c: BevCell) -> usize {
        c.row * self.cols() + c.col
    }

    pub fn cell_center(&self, c: BevCell) -> (f64, f64) {
        (
            self.x_min + (c.col as f64 + 0.5) * self.cell,
            self.y_min + (c.row as f64 + 0.5) * self.cell,
        )
    }
}

/// Cell of every point, `None` outside the grid.
pub fn bev_bin(points: &[Point], spec: &BevSpec) -> Vec<Option<BevCell>> {
    points.iter().map(|p| spec.bin_xy(p.x, p.y)).collect()
}

/// Pillar channels produced by [`pillarize`].
pub mod pillar {
    pub const LOG_COUNT: usize = 0;
    pub const MEAN_Z: usize = 1;
    pub const MAX_Z: usize = 2;
    pub const MEAN_INTENSITY: usize = 3;
    pub const COUNT: usize = 4;
}

/// Per-cell `(ln(1 + count), mean z, max z, mean intensity)`; empty cells are zero.
///
/// Contributions are accumulated in sorted `(cell, z, intensity)` order, so
/// the result is bit-identical under any permutation of `points`.
pub fn pillarize(points: &[Point], spec: &BevSpec) -> Result<Tensor> {
    spec.validate()?;
    let (rows, cols) = (spec.rows(), spec.cols());
    let mut entries: Vec<(usize, f64, f64)> = points
        .iter()
        .filter_map(|p| {
            spec.bin_xy(p.x, p.y)
                .map(|c| (spec.flat(c), p.z, p.intensity))
        })
        .collect();
    entries.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    let plane = rows * cols;
    let mut out = Tensor::zeros(pillar::COUNT, rows, cols);
    let data = out.data_mut();
    let mut i = 0;
    while i < entries.len() {
        let cell = entries[i].0;
        let (mut n, mut sz, mut mz, mut si) = (0usize, 0.0, f64::NEG_INFINITY, 0.0);
        while i < entries.len() && entries[i].0 == cell {
            n += 1;
            sz += entries[i].1;
            mz = mz.max(entries[i].1);
            si += entries[i].2;
            i += 1;
        }
        data[pillar::LOG_COUNT * plane + cell] = (n as f64).ln_1p();
        data[pillar::MEAN_Z * plane + cell] = sz / n as f64;
        data[pillar::MAX_Z * plane + cell] = mz;
        data[pillar::MEAN_INTENSITY * plane + cell] = si / n as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    #[default]
    Max,
    Mean,
}

/// Gathers each point's RV feature vector and scatters it into its BEV cell.
///
/// `rv_features` may be an integer down-scale of the range image; pixel
/// coordinates are divided by the ratio. A point whose pixel was won by a
/// nearer point gathers the winner's features. Empty cells are zero.
pub fn rv_to_bev(
    rv_features: &Tensor,
    img: &RangeImage,
    points: &[Point],
    spec: &BevSpec,
    reduce: Reduce,
) -> Result<Tensor> {
    spec.validate()?;
    let (c, fh, fw) = rv_features.shape();
    let (ih, iw) = (img.spec.height, img.spec.width);
    if fh == 0 || fw == 0 || ih % fh != 0 || iw % fw != 0 {
        return shape_err(
            "rv_to_bev",
            format!("feature map {fh}x{fw} is not an integer down-scale of range image {ih}x{iw}"),
        );
    }
    if points.len() != img.pixel_of_point.len() {
        return shape_err(
            "rv_to_bev",
            format!(
                "{} points for a range image built from {}",
                points.len(),
                img.pixel_of_point.len()
            ),
        );
    }
    let (sy, sx) = (ih / fh, iw / fw);
    let (rows, cols) = (spec.rows(), spec.cols());
    let plane = rows * cols;
    let fplane = fh * fw;

    // (cell, feature pixel) pairs sorted so accumulation order is canonical.
    let mut pairs: Vec<(usize, usize)> = points
        .iter()
        .zip(&img.pixel_of_point)
        .filter_map(|(p, px)| {
            let (row, col) = (*px)?;
            let cell = spec.bin_xy(p.x, p.y)?;
            Some((spec.flat(cell), (row / sy) * fw + col / sx))
        })
        .collect();
    pairs.sort_unstable();

    let mut out = Tensor::zeros(c, rows, cols);
    let src = rv_features.data();
    let dst = out.data_mut();
    let mut i = 0;
    while i < pairs.len() {
        let cell = pairs[i].0;
        let start = i;
        while i < pairs.len() && pairs[i].0 == cell {
            i += 1;
        }
        let group = &pairs[start..i];
        for ch in 0..c {
            let vals = group.iter().map(|&(_, pix)| src[ch * fplane + pix]);
            dst[ch * plane + cell] = match reduce {
                Reduce::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                Reduce::Mean => vals.sum::<f64>() / group.len() as f64,
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{rv_project, RvSpec};

    #[test]
    fn origin_bins_to_column_64() {
        let spec = BevSpec::default();
        assert_eq!((spec.rows(), spec.cols()), (128, 128));
        let c = spec.bin_xy(0.0, -25.6).unwrap();
        assert_eq!((c.col, c.row), (64, 0));
    }

    #[test]
    fn max_boundary_is_excluded() {
        let spec = BevSpec::default();
        assert!(spec.bin_xy(25.6, 0.0).is_none());
        assert!(spec.bin_xy(0.0, 25.6).is_none());
        assert!(spec.bin_xy(-25.6, -25.6).is_some());
        assert!(spec.bin_xy(-25.600001, 0.0).is_none());
    }

    #[test]
    fn non_integral_extent_rejected() {
        let spec = BevSpec::square(25.5, 0.4);
        assert!(spec.validate().is_err());
        assert!(pillarize(&[], &spec).is_err());
    }

    #[test]
    fn single_point_pillar() {
        let spec = BevSpec::square(2.0, 1.0);
        let t = pillarize(&[Point::new(0.5, -1.5, 0.7, 0.25)], &spec).unwrap();
        let c = spec.bin_xy(0.5, -1.5).unwrap();
        assert_eq!(t.get(pillar::LOG_COUNT, c.row, c.col), 2f64.ln());
        assert_eq!(t.get(pillar::MEAN_Z, c.row, c.col), 0.7);
        assert_eq!(t.get(pillar::MAX_Z, c.row, c.col), 0.7);
        assert_eq!(t.get(pillar::MEAN_INTENSITY, c.row, c.col), 0.25);
        let nonzero = t.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 4);
    }

    fn two_point_setup(f0: f64, f1: f64) -> (Tensor, RangeImage, Vec<Point>, BevSpec) {
        let rv = RvSpec {
            height: 2,
            width: 64,
            incl_min: -0.5,
            incl_max: 0.5,
        };
        // Same BEV cell, different azimuth columns.
        let pts = vec![
            Point::new(3.1, 0.1, 0.0, 0.0),
            Point::new(3.3, 0.9, 0.0, 0.0),
        ];
        let img = rv_project(&pts, &rv).unwrap();
        let mut feat = Tensor::zeros(1, 2, 64);
        let (r0, c0) = img.pixel_of_point[0].unwrap();
        let (r1, c1) = img.pixel_of_point[1].unwrap();
        assert_ne!((r0, c0), (r1, c1));
        feat.set(0, r0, c0, f0);
        feat.set(0, r1, c1, f1);
        (feat, img, pts, BevSpec::square(4.0, 1.0))
    }

    #[test]
    fn two_points_one_cell_max_and_mean() {
        let (feat, img, pts, bev) = two_point_setup(2.0, 4.0);
        let c = bev.bin_xy(3.1, 0.1).unwrap();
        assert_eq!(bev.bin_xy(3.3, 0.9), Some(c));
        let mx = rv_to_bev(&feat, &img, &pts, &bev, Reduce::Max).unwrap();
        let mn = rv_to_bev(&feat, &img, &pts, &bev, Reduce::Mean).unwrap();
        assert_eq!(mx.get(0, c.row, c.col), 4.0);
        assert_eq!(mn.get(0, c.row, c.col), 3.0);
        assert_eq!(mx.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn downscaled_features_and_bad_ratio() {
        let (feat, img, pts, bev) = two_point_setup(1.0, 1.0);
        assert!(rv_to_bev(&Tensor::zeros(1, 2, 3), &img, &pts, &bev, Reduce::Max).is_err());
        let half = Tensor::full(2, 1, 32, 5.0);
        let out = rv_to_bev(&half, &img, &pts, &bev, Reduce::Mean).unwrap();
        let c = bev.bin_xy(3.1, 0.1).unwrap();
        assert_eq!(out.get(1, c.row, c.col), 5.0);
        let _ = feat;
    }
}
