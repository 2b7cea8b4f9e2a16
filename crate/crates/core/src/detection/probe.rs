use nalgebra::{DMatrix, DVector};

use crate::error::{domain_err, shape_err, Result};

/// Running sums `XᵀX` and `Xᵀy` for ridge regression. Merging in a fixed
/// order keeps the fit deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeAccumulator {
    dim: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    rows: usize,
}

impl RidgeAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            xtx: vec![0.0; dim * dim],
            xty: vec![0.0; dim],
            rows: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn add(&mut self, x: &[f64], y: f64) {
        debug_assert_eq!(x.len(), self.dim);
        for i in 0..self.dim {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            self.xty[i] += xi * y;
            let row = &mut self.xtx[i * self.dim..(i + 1) * self.dim];
            for (acc, xj) in row.iter_mut().zip(x) {
                *acc += xi * xj;
            }
        }
        self.rows += 1;
    }

    /// Adds `n` rows at once; `x` is row-major `n x dim`.
    pub fn add_rows(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        let n = y.len();
        if x.len() != n * self.dim {
            return shape_err(
                "RidgeAccumulator::add_rows",
                format!("{} values for {n} rows of {}", x.len(), self.dim),
            );
        }
        let m = DMatrix::from_row_slice(n, self.dim, x);
        let xtx = m.tr_mul(&m);
        let xty = m.tr_mul(&DVector::from_column_slice(y));
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.xtx[i * self.dim + j] += xtx[(i, j)];
            }
            self.xty[i] += xty[i];
        }
        self.rows += n;
        Ok(())
    }

    pub fn merge(&mut self, other: &RidgeAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return shape_err("RidgeAccumulator::merge", "dimension mismatch");
        }
        self.xtx
            .iter_mut()
            .zip(&other.xtx)
            .for_each(|(a, b)| *a += b);
        self.xty
            .iter_mut()
            .zip(&other.xty)
            .for_each(|(a, b)| *a += b);
        self.rows += other.rows;
        Ok(())
    }

    /// Solves `(XᵀX + λI) w = Xᵀy`.
    pub fn solve(&self, lambda: f64) -> Result<LinearProbe> {
        if !(lambda > 0.0) {
            return domain_err(
                "RidgeAccumulator::solve",
                format!("lambda {lambda} must be positive"),
            );
        }
        let mut a = DMatrix::from_row_slice(self.dim, self.dim, &self.xtx);
        for i in 0..self.dim {
            a[(i, i)] += lambda;
        }
        let b = DVector::from_column_slice(&self.xty);
        let Some(chol) = a.cholesky() else {
            return domain_err(
                "RidgeAccumulator::solve",
                "normal matrix is not positive definite",
            );
        };
        Ok(LinearProbe {
            weights: chol.solve(&b).iter().copied().collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
}

impl LinearProbe {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_map() {
        let mut acc = RidgeAccumulator::new(3);
        for i in 0..50 {
            let x = [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 1.0];
            acc.add(&x, 2.0 * x[0] - 0.5 * x[1] + 0.25);
        }
        let p = acc.solve(1e-10).unwrap();
        for (w, e) in p.weights.iter().zip([2.0, -0.5, 0.25]) {
            assert!((w - e).abs() < 1e-6, "{w} vs {e}");
        }
    }

    #[test]
    fn batched_rows_match_single_rows() {
        let (mut a, mut b) = (RidgeAccumulator::new(2), RidgeAccumulator::new(2));
        let x = [1.0, 2.0, 0.5, -1.0, 3.0, 0.25];
        let y = [1.0, -2.0, 0.5];
        for i in 0..3 {
            a.add(&x[2 * i..2 * i + 2], y[i]);
        }
        b.add_rows(&x, &y).unwrap();
        assert_eq!(a.rows(), b.rows());
        let (pa, pb) = (a.solve(0.5).unwrap(), b.solve(0.5).unwrap());
        for (u, v) in pa.weights.iter().zip(&pb.weights) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_equals_single_pass() {
        let rows: Vec<([f64; 2], f64)> =
            (0..10).map(|i| ([i as f64, 1.0], i as f64 * 0.5)).collect();
        let mut whole = RidgeAccumulator::new(2);
        let (mut a, mut b) = (RidgeAccumulator::new(2), RidgeAccumulator::new(2));
        for (i, (x, y)) in rows.iter().enumerate() {
            whole.add(x, *y);
            if i < 4 {
                a.add(x, *y)
            } else {
                b.add(x, *y)
            }
        }
        a.merge(&b).unwrap();
        assert_eq!(a.solve(0.1).unwrap(), whole.solve(0.1).unwrap());
    }
}
