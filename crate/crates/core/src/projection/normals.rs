use super::range::RangeImage;
use crate::tensor::Tensor;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Difference across a pixel from its two neighbors `prev` and `next`:
/// central when both are valid, one-sided when only one is.
fn difference(
    img: &RangeImage,
    center: [f64; 3],
    prev: Option<(usize, usize)>,
    next: Option<(usize, usize)>,
) -> Option<[f64; 3]> {
    let usable = |p: Option<(usize, usize)>| p.filter(|&(r, c)| img.is_valid(r, c));
    match (usable(prev), usable(next)) {
        (Some(a), Some(b)) => Some(sub(img.xyz(b.0, b.1), img.xyz(a.0, a.1))),
        (None, Some(b)) => Some(sub(img.xyz(b.0, b.1), center)),
        (Some(a), None) => Some(sub(center, img.xyz(a.0, a.1))),
        (None, None) => None,
    }
}

/// Per-pixel unit normals `(3, H, W)` from neighbor differences.
///
/// Columns wrap around (the azimuth axis is periodic); rows do not. The
/// normal is oriented toward the sensor, i.e. `n · (-P) >= 0`. Invalid
/// pixels, pixels lacking a horizontal or a vertical difference, and
/// degenerate cross products get the zero vector.
pub fn surface_normals(img: &RangeImage) -> Tensor {
    let (h, w) = (img.spec.height, img.spec.width);
    let mut out = Tensor::zeros(3, h, w);
    for row in 0..h {
        for col in 0..w {
            if !img.is_valid(row, col) {
                continue;
            }
            let p = img.xyz(row, col);
            let left = Some((row, (col + w - 1) % w));
            let right = Some((row, (col + 1) % w));
            let up = row.checked_sub(1).map(|r| (r, col));
            let down = (row + 1 < h).then_some((row + 1, col));
            let (Some(du), Some(dv)) = (
                difference(img, p, left, right),
                difference(img, p, up, down),
            ) else {
                continue;
            };
            let n = cross(du, dv);
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                continue;
            }
            let sign = if n[0] * p[0] + n[1] * p[1] + n[2] * p[2] > 0.0 {
                -1.0
            } else {
                1.0
            };
            for (k, v) in n.iter().enumerate() {
                out.set(k, row, col, sign * v / norm);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{rv_project, RvSpec};
    use crate::scene::Point;
    use std::f64::consts::PI;

    fn spec() -> RvSpec {
        RvSpec {
            height: 16,
            width: 64,
            incl_min: -0.6,
            incl_max: 0.3,
        }
    }

    /// One point per pixel along the pixel-center ray, hit against `hit`.
    fn rays(spec: &RvSpec, hit: impl Fn([f64; 3]) -> Option<f64>) -> Vec<Point> {
        let mut pts = Vec::new();
        for row in 0..spec.height {
            for col in 0..spec.width {
                let az = (col as f64 + 0.5) / spec.width as f64 * 2.0 * PI - PI;
                let incl = spec.incl_max
                    - (row as f64 + 0.5) / spec.height as f64 * (spec.incl_max - spec.incl_min);
                let d = [incl.cos() * az.cos(), incl.cos() * az.sin(), incl.sin()];
                if let Some(t) = hit(d) {
                    pts.push(Point::new(t * d[0], t * d[1], t * d[2], 0.5));
                }
            }
        }
        pts
    }

    #[test]
    fn flat_ground_points_up() {
        let s = spec();
        let pts = rays(&s, |d| (d[2] < -0.05).then(|| -1.8 / d[2]));
        let img = rv_project(&pts, &s).unwrap();
        let n = surface_normals(&img);
        let mut checked = 0;
        for row in 1..s.height - 1 {
            for col in 0..s.width {
                let valid_block = (row - 1..=row + 1).all(|r| img.is_valid(r, col));
                if !valid_block {
                    continue;
                }
                checked += 1;
                assert!(n.get(0, row, col).abs() < 1e-6);
                assert!(n.get(1, row, col).abs() < 1e-6);
                assert!((n.get(2, row, col) - 1.0).abs() < 1e-6);
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn wall_faces_sensor() {
        let s = spec();
        // Plane x = 6 seen within ±45° of the forward axis.
        let pts = rays(&s, |d| (d[0] > 0.75).then(|| 6.0 / d[0]));
        let img = rv_project(&pts, &s).unwrap();
        let n = surface_normals(&img);
        let mut checked = 0;
        for row in 0..s.height {
            for col in 0..s.width {
                if img.is_valid(row, col) {
                    let v = [n.get(0, row, col), n.get(1, row, col), n.get(2, row, col)];
                    if v != [0.0; 3] {
                        checked += 1;
                        assert!((v[0] + 1.0).abs() < 1e-9, "{v:?}");
                        assert!(v[1].abs() < 1e-9 && v[2].abs() < 1e-9);
                    }
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn isolated_pixel_gets_zero() {
        let s = spec();
        let img = rv_project(&[Point::new(5.0, 0.5, -0.5, 0.1)], &s).unwrap();
        assert!(surface_normals(&img).data().iter().all(|&v| v == 0.0));
    }
}
