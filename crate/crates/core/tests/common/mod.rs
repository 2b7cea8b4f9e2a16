//! Brute-force oracles shared by the integration and acceptance tests. None
//! of them call the library kernel they check.

#![allow(dead_code)]

use pgf::fusion::CbamParams;
use pgf::projection::{BevSpec, RangeImage, Reduce};
use pgf::scene::{Box7, Point};
use pgf::tensor::{ConvParams, MlpParams, Tensor};
use rand::Rng;

pub fn random_tensor(c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Direct nested-loop cross-correlation with zero padding.
pub fn conv_oracle(x: &Tensor, p: &ConvParams) -> Vec<f64> {
    let (ci, h, w) = x.shape();
    assert_eq!(ci, p.in_ch);
    let span_h = p.dilation * (p.kh - 1) + 1;
    let span_w = p.dilation * (p.kw - 1) + 1;
    let oh = (h + 2 * p.padding - span_h) / p.stride + 1;
    let ow = (w + 2 * p.padding - span_w) / p.stride + 1;
    let mut out = vec![0.0; p.out_ch * oh * ow];
    for o in 0..p.out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = p.bias.as_ref().map_or(0.0, |b| b[o]);
                for i in 0..ci {
                    for ky in 0..p.kh {
                        for kx in 0..p.kw {
                            let iy = (oy * p.stride + ky * p.dilation) as i64 - p.padding as i64;
                            let ix = (ox * p.stride + kx * p.dilation) as i64 - p.padding as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            let wv = p.weights[((o * ci + i) * p.kh + ky) * p.kw + kx];
                            acc += wv * x.get(i, iy as usize, ix as usize);
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

fn cell_of(spec: &BevSpec, x: f64, y: f64) -> Option<(usize, usize)> {
    let cols = ((spec.x_max - spec.x_min) / spec.cell).round() as i64;
    let rows = ((spec.y_max - spec.y_min) / spec.cell).round() as i64;
    let c = ((x - spec.x_min) / spec.cell).floor() as i64;
    let r = ((y - spec.y_min) / spec.cell).floor() as i64;
    (x >= spec.x_min
        && x < spec.x_max
        && y >= spec.y_min
        && y < spec.y_max
        && (0..cols).contains(&c)
        && (0..rows).contains(&r))
    .then_some((r as usize, c as usize))
}

/// Per-cell scan over all points: `(ln(1 + n), mean z, max z, mean intensity)`.
pub fn pillarize_oracle(points: &[Point], spec: &BevSpec) -> Vec<f64> {
    let rows = ((spec.y_max - spec.y_min) / spec.cell).round() as usize;
    let cols = ((spec.x_max - spec.x_min) / spec.cell).round() as usize;
    let plane = rows * cols;
    let mut out = vec![0.0; 4 * plane];
    let cells: Vec<Option<(usize, usize)>> =
        points.iter().map(|p| cell_of(spec, p.x, p.y)).collect();
    for r in 0..rows {
        for c in 0..cols {
            let members: Vec<&Point> = points
                .iter()
                .zip(&cells)
                .filter(|(_, cell)| **cell == Some((r, c)))
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            let i = r * cols + c;
            out[i] = (1.0 + n).ln();
            out[plane + i] = members.iter().map(|p| p.z).sum::<f64>() / n;
            out[2 * plane + i] = members
                .iter()
                .map(|p| p.z)
                .fold(f64::NEG_INFINITY, f64::max);
            out[3 * plane + i] = members.iter().map(|p| p.intensity).sum::<f64>() / n;
        }
    }
    out
}

/// Per-cell scan over all points, gathering each point's feature pixel.
pub fn rv_to_bev_oracle(
    features: &Tensor,
    img: &RangeImage,
    points: &[Point],
    spec: &BevSpec,
    reduce: Reduce,
) -> Vec<f64> {
    let (ch, fh, fw) = features.shape();
    let (sy, sx) = (img.spec.height / fh, img.spec.width / fw);
    let rows = ((spec.y_max - spec.y_min) / spec.cell).round() as usize;
    let cols = ((spec.x_max - spec.x_min) / spec.cell).round() as usize;
    let mut out = vec![0.0; ch * rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let pixels: Vec<(usize, usize)> = points
                .iter()
                .zip(&img.pixel_of_point)
                .filter(|(p, px)| px.is_some() && cell_of(spec, p.x, p.y) == Some((r, c)))
                .map(|(_, px)| {
                    let (y, x) = px.unwrap();
                    (y / sy, x / sx)
                })
                .collect();
            if pixels.is_empty() {
                continue;
            }
            for k in 0..ch {
                let vals = pixels.iter().map(|&(y, x)| features.get(k, y, x));
                out[(k * rows + r) * cols + c] = match reduce {
                    Reduce::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                    Reduce::Mean => vals.sum::<f64>() / pixels.len() as f64,
                };
            }
        }
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn mlp_oracle(v: &[f64], p: &MlpParams) -> Vec<f64> {
    let mut hidden = vec![0.0; p.hidden];
    for (j, h) in hidden.iter_mut().enumerate() {
        let mut z = p.b1[j];
        for (i, x) in v.iter().enumerate() {
            z += p.w1[j * p.input + i] * x;
        }
        *h = z.max(0.0);
    }
    (0..p.output)
        .map(|o| {
            p.b2[o]
                + (0..p.hidden)
                    .map(|j| p.w2[o * p.hidden + j] * hidden[j])
                    .sum::<f64>()
        })
        .collect()
}

/// CBAM written out with loops: channel attention from max/avg spatial
/// pools through the shared MLP, then spatial attention from max/avg
/// channel pools through the conv.
pub fn cbam_oracle(x: &Tensor, p: &CbamParams) -> Vec<f64> {
    let (c, h, w) = x.shape();
    let plane = h * w;
    let d = x.data();
    let mut maxp = vec![f64::NEG_INFINITY; c];
    let mut avgp = vec![0.0; c];
    for k in 0..c {
        for v in &d[k * plane..(k + 1) * plane] {
            maxp[k] = maxp[k].max(*v);
            avgp[k] += v;
        }
        avgp[k] /= plane as f64;
    }
    let (m, a) = (
        mlp_oracle(&maxp, &p.channel_mlp),
        mlp_oracle(&avgp, &p.channel_mlp),
    );
    let ca: Vec<f64> = (0..c).map(|k| sigmoid(m[k] + a[k])).collect();
    let refined: Vec<f64> = (0..c * plane).map(|i| d[i] * ca[i / plane]).collect();
    let mut pooled = vec![0.0; 2 * plane];
    for i in 0..plane {
        let vals = (0..c).map(|k| refined[k * plane + i]);
        pooled[i] = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        pooled[plane + i] = vals.sum::<f64>() / c as f64;
    }
    let pooled = Tensor::from_vec(2, h, w, pooled).unwrap();
    let logits = conv_oracle(&pooled, &p.spatial_conv);
    (0..c * plane)
        .map(|i| refined[i] * sigmoid(logits[i % plane]))
        .collect()
}

/// `((n + 1)^2 - 1) / ((n + 1)^2 + 1)`, exact integers until the division.
pub fn density_closed_form(n: u64) -> f64 {
    let m = (n as u128 + 1) * (n as u128 + 1);
    (m - 1) as f64 / (m + 1) as f64
}

fn bev_dist(a: &Box7, b: &Box7) -> f64 {
    ((a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2)).sqrt()
}

/// True-positive count of greedily matching the `n` highest-scored
/// detections, recomputed from scratch for the prefix.
fn prefix_tp(sorted: &[&Box7], gts: &[&Box7], n: usize, d: f64) -> usize {
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for det in &sorted[..n] {
        let mut best: Option<(f64, usize)> = None;
        for (j, g) in gts.iter().enumerate() {
            let dist = bev_dist(det, g);
            if !used[j] && dist < d && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, j));
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            tp += 1;
        }
    }
    tp
}

/// AP of one class by enumerating every score threshold. Scores must be
/// distinct. Precision at recall level `r` is the best precision over all
/// thresholds reaching recall `r`; levels 0.11..=1.00, minus 0.1 floored at
/// 0, averaged, divided by 0.9. `None` when the class has no ground truth.
pub fn ap_oracle(dets: &[Box7], gts: &[Box7], class_id: u32, d: f64) -> Option<f64> {
    let gts: Vec<&Box7> = gts.iter().filter(|g| g.class_id == class_id).collect();
    if gts.is_empty() {
        return None;
    }
    let mut sorted: Vec<&Box7> = dets.iter().filter(|b| b.class_id == class_id).collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let points: Vec<(f64, f64)> = (1..=sorted.len())
        .map(|n| {
            let tp = prefix_tp(&sorted, &gts, n, d) as f64;
            (tp / gts.len() as f64, tp / n as f64)
        })
        .collect();
    let mut total = 0.0;
    for j in 11..=100 {
        let level = j as f64 / 100.0;
        let p = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += (p - 0.1).max(0.0);
    }
    Some(total / 90.0 / 0.9)
}

/// A small random scene for AP checks: up to 6 ground truths and 8
/// detections over 2 classes, with distinct scores.
pub fn small_ap_case(rng: &mut impl Rng) -> (Vec<Box7>, Vec<Box7>) {
    let bx = |cx: f64, cy: f64, class_id: u32, score: f64| Box7 {
        cx,
        cy,
        cz: 0.0,
        l: 1.0,
        w: 1.0,
        h: 1.0,
        yaw: 0.0,
        class_id,
        score,
    };
    let n_gt = rng.random_range(0..=6);
    let n_det = rng.random_range(0..=8);
    let gts: Vec<Box7> = (0..n_gt)
        .map(|_| {
            bx(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(1..=2),
                1.0,
            )
        })
        .collect();
    let mut scores: Vec<f64> = (0..n_det)
        .map(|i| (i as f64 + rng.random_range(0.1..0.9)) / 8.0)
        .collect();
    for i in (1..scores.len()).rev() {
        scores.swap(i, rng.random_range(0..=i));
    }
    let dets = scores
        .into_iter()
        .map(|s| {
            if !gts.is_empty() && rng.random_bool(0.6) {
                let g = gts[rng.random_range(0..gts.len())];
                let class_id = if rng.random_bool(0.85) {
                    g.class_id
                } else {
                    3 - g.class_id
                };
                bx(
                    g.cx + rng.random_range(-3.0..3.0),
                    g.cy + rng.random_range(-3.0..3.0),
                    class_id,
                    s,
                )
            } else {
                bx(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(1..=2),
                    s,
                )
            }
        })
        .collect();
    (dets, gts)
}
