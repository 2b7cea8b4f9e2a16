use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};
use crate::scene::Point;
use crate::tensor::Tensor;

/// Range-image geometry. Azimuth always spans `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvSpec {
    pub height: usize,
    pub width: usize,
    /// Lowest kept inclination, radians.
    pub incl_min: f64,
    /// Highest kept inclination, radians.
    pub incl_max: f64,
}

impl Default for RvSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 256,
            incl_min: -0.45,
            incl_max: 0.1,
        }
    }
}

impl RvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return shape_err(
                "RvSpec",
                format!("image {}x{} must be at least 2x2", self.height, self.width),
            );
        }
        if !(self.incl_min < self.incl_max)
            || !self.incl_min.is_finite()
            || !self.incl_max.is_finite()
        {
            return domain_err(
                "RvSpec",
                format!("inclination range [{}, {}]", self.incl_min, self.incl_max),
            );
        }
        Ok(())
    }

    /// Pixel for a point, or `None` when its inclination is outside the range.
    pub fn pixel(&self, p: &Point) -> Option<(usize, usize)> {
        let r = p.range();
        let incl = (p.z / r).asin();
        if incl < self.incl_min || incl > self.incl_max {
            return None;
        }
        let u = (p.y.atan2(p.x) + PI) / (2.0 * PI) * self.width as f64;
        let v = (self.incl_max - incl) / (self.incl_max - self.incl_min) * self.height as f64;
        let col = (u.floor().max(0.0) as usize).min(self.width - 1);
        let row = (v.floor().max(0.0) as usize).min(self.height - 1);
        Some((row, col))
    }
}

/// Feature channels of a [`RangeImage`].
pub mod channel {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const RANGE: usize = 3;
    pub const INTENSITY: usize = 4;
    pub const COUNT: usize = 5;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    pub spec: RvSpec,
    /// `(x, y, z, range, intensity)` of the winning point per pixel; zero where invalid.
    pub features: Tensor,
    pub valid: Vec<bool>,
    /// `(row, col)` for every kept point, including collision losers.
    pub pixel_of_point: Vec<Option<(usize, usize)>>,
    pub point_of_pixel: Vec<Option<usize>>,
    /// Points outside the inclination range.
    pub dropped: usize,
}

impl RangeImage {
    pub fn kept(&self) -> usize {
        self.pixel_of_point.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.spec.width + col]
    }

    pub fn xyz(&self, row: usize, col: usize) -> [f64; 3] {
        [
            self.features.get(channel::X, row, col),
            self.features.get(channel::Y, row, col),
            self.features.get(channel::Z, row, col),
        ]
    }
}

/// Collision order: nearer first, then lexicographic coordinates so the
/// winner does not depend on input order.
fn nearer(a: &Point, b: &Point) -> Ordering {
    a.range()
        .total_cmp(&b.range())
        .then(a.x.total_cmp(&b.x))
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
        .then(a.intensity.total_cmp(&b.intensity))
}

/// Spherical projection with nearest-point-wins collisions.
pub fn rv_project(points: &[Point], spec: &RvSpec) -> Result<RangeImage> {
    spec.validate()?;
    if points.is_empty() {
        return shape_err("rv_project", "empty point cloud");
    }
    if let Some(i) = points
        .iter()
        .position(|p| !(p.range() > 0.0) || !p.range().is_finite())
    {
        return domain_err(
            "rv_project",
            format!("point {i} has zero or non-finite range"),
        );
    }
    let (h, w) = (spec.height, spec.width);
    let mut point_of_pixel: Vec<Option<usize>> = vec![None; h * w];
    let mut pixel_of_point = Vec::with_capacity(points.len());
    let mut dropped = 0;
    for (i, p) in points.iter().enumerate() {
        let px = spec.pixel(p);
        match px {
            Some((row, col)) => {
                let slot = &mut point_of_pixel[row * w + col];
                match slot {
                    Some(j) if nearer(&points[*j], p) != Ordering::Greater => {}
                    _ => *slot = Some(i),
                }
            }
            None => dropped += 1,
        }
        pixel_of_point.push(px);
    }
    let mut features = Tensor::zeros(channel::COUNT, h, w);
    let mut valid = vec![false; h * w];
    for (pix, slot) in point_of_pixel.iter().enumerate() {
        if let Some(i) = slot {
            let p = &points[*i];
            let (row, col) = (pix / w, pix % w);
            valid[pix] = true;
            features.set(channel::X, row, col, p.x);
            features.set(channel::Y, row, col, p.y);
            features.set(channel::Z, row, col, p.z);
            features.set(channel::RANGE, row, col, p.range());
            features.set(channel::INTENSITY, row, col, p.intensity);
        }
    }
    Ok(RangeImage {
        spec: *spec,
        features,
        valid,
        pixel_of_point,
        point_of_pixel,
        dropped,
    })
}
