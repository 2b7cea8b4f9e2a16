//! Center-distance average precision.
//!
//! Detections are ranked by score (ties ordered by box content) and
//! greedily matched to the nearest unmatched same-class ground truth whose
//! BEV center distance is strictly below the threshold. Precision/recall
//! points are taken only after complete groups of equal score, so the result
//! does not depend on the order of tied detections. Precision is read at
//! recall levels `0.11, 0.12, ..., 1.00` from the envelope (the best
//! precision at any recall at or above the level, 0 beyond the reached
//! recall), reduced by 0.1, clamped at 0, averaged, and rescaled by 1/0.9.

use serde::Serialize;

use crate::error::{shape_err, Result};
use crate::scene::Box7;

pub const DISTANCE_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const MIN_RECALL: f64 = 0.1;
pub const MIN_PRECISION: f64 = 0.1;

/// Descending score, then box content, for a total, input-order-free ranking.
pub fn rank_order(a: &Box7, b: &Box7) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| {
        [a.cx, a.cy, a.cz, a.l, a.w, a.h, a.yaw]
            .iter()
            .zip([b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw].iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ApResult {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// No ground truth of the class existed; `ap` is 0 by definition.
    pub no_ground_truth: bool,
}

/// Scores of one class's detections with their TP flags, matched scene by scene.
fn match_scenes(scenes: &[(&[Box7], &[Box7])], class_id: u32, d: f64) -> (Vec<(f64, bool)>, usize) {
    let mut out = Vec::new();
    let mut npos = 0;
    for (dets, gts) in scenes {
        let gts: Vec<&Box7> = gts.iter().filter(|g| g.class_id == class_id).collect();
        npos += gts.len();
        let mut dets: Vec<&Box7> = dets.iter().filter(|b| b.class_id == class_id).collect();
        dets.sort_by(|a, b| rank_order(a, b));
        let mut taken = vec![false; gts.len()];
        for det in dets {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                let dist = det.bev_distance(g);
                if !taken[j] && dist < d && best.is_none_or(|(_, bd)| dist < bd) {
                    best = Some((j, dist));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
            }
            out.push((det.score, best.is_some()));
        }
    }
    (out, npos)
}

fn ap_from_matches(mut matches: Vec<(f64, bool)>, npos: usize) -> ApResult {
    let tp_total = matches.iter().filter(|m| m.1).count();
    let base = ApResult {
        ap: 0.0,
        tp: tp_total,
        fp: matches.len() - tp_total,
        fn_: npos - tp_total,
        no_ground_truth: npos == 0,
    };
    if npos == 0 || matches.is_empty() {
        return base;
    }
    matches.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(score, is_tp)) in matches.iter().enumerate() {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_end = matches.get(i + 1).is_none_or(|next| next.0 != score);
        if group_end {
            curve.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    // Envelope: best precision at recall >= r, swept from the high-recall end.
    let mut envelope = vec![0.0; curve.len()];
    let mut best = 0.0f64;
    for i in (0..curve.len()).rev() {
        best = best.max(curve[i].1);
        envelope[i] = best;
    }
    let first = (MIN_RECALL * 100.0).round() as usize + 1;
    let mut sum = 0.0;
    let mut k = 0;
    for j in first..=100 {
        let level = j as f64 / 100.0;
        while k < curve.len() && curve[k].0 < level {
            k += 1;
        }
        let p = if k < curve.len() { envelope[k] } else { 0.0 };
        sum += p.max(MIN_PRECISION);
    }
    let levels = (100 - first + 1) as f64;
    ApResult {
        // (sum - n * 0.1) / (n * 0.9) is exact when every level has precision 1.
        ap: ((sum - levels * MIN_PRECISION) / (levels * (1.0 - MIN_PRECISION))).clamp(0.0, 1.0),
        ..base
    }
}

/// AP of one class at one distance threshold for a single scene.
pub fn match_and_ap(dets: &[Box7], gts: &[Box7], class_id: u32, d: f64) -> ApResult {
    let (m, npos) = match_scenes(&[(dets, gts)], class_id, d);
    ap_from_matches(m, npos)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub thresholds: Vec<f64>,
    /// `ap[k][t]`: class `k + 1` at `thresholds[t]`.
    pub ap: Vec<Vec<f64>>,
    pub class_map: Vec<f64>,
    pub map: f64,
    /// Summed over classes, per threshold.
    pub counts: Vec<Counts>,
    /// Classes without any ground truth (their AP is 0).
    pub classes_without_gt: Vec<u32>,
}

/// AP pooled over scenes per (class, threshold); mAP is the mean over
/// classes of each class's mean over thresholds.
pub fn evaluate(dets: &[Vec<Box7>], gts: &[Vec<Box7>], k: usize) -> Result<EvalResult> {
    if dets.len() != gts.len() {
        return shape_err(
            "evaluate",
            format!("{} detection lists for {} scenes", dets.len(), gts.len()),
        );
    }
    let scenes: Vec<(&[Box7], &[Box7])> = dets
        .iter()
        .zip(gts)
        .map(|(d, g)| (d.as_slice(), g.as_slice()))
        .collect();
    let mut ap = vec![vec![0.0; DISTANCE_THRESHOLDS.len()]; k];
    let mut counts = vec![Counts::default(); DISTANCE_THRESHOLDS.len()];
    let mut classes_without_gt = Vec::new();
    for (c, row) in ap.iter_mut().enumerate() {
        let class_id = c as u32 + 1;
        for (t, &d) in DISTANCE_THRESHOLDS.iter().enumerate() {
            let (m, npos) = match_scenes(&scenes, class_id, d);
            let r = ap_from_matches(m, npos);
            row[t] = r.ap;
            counts[t].tp += r.tp;
            counts[t].fp += r.fp;
            counts[t].fn_ += r.fn_;
            if t == 0 && r.no_ground_truth {
                classes_without_gt.push(class_id);
            }
        }
    }
    let class_map: Vec<f64> = ap
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    let map = if k == 0 {
        0.0
    } else {
        class_map.iter().sum::<f64>() / k as f64
    };
    Ok(EvalResult {
        thresholds: DISTANCE_THRESHOLDS.to_vec(),
        ap,
        class_map,
        map,
        counts,
        classes_without_gt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64, class_id: u32, score: f64) -> Box7 {
        Box7 {
            cx,
            cy,
            cz: 0.0,
            l: 1.0,
            w: 1.0,
            h: 1.0,
            yaw: 0.0,
            class_id,
            score,
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gts = vec![
            b(0.0, 0.0, 1, 1.0),
            b(5.0, 5.0, 1, 1.0),
            b(-3.0, 2.0, 2, 1.0),
        ];
        let r = evaluate(std::slice::from_ref(&gts), std::slice::from_ref(&gts), 2).unwrap();
        assert_eq!(r.map, 1.0);
        assert!(r.ap.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn threshold_semantics() {
        let gts = [b(0.0, 0.0, 1, 1.0)];
        let dets = [b(3.0, 0.0, 1, 0.9)];
        let at2 = match_and_ap(&dets, &gts, 1, 2.0);
        let at4 = match_and_ap(&dets, &gts, 1, 4.0);
        assert_eq!((at2.tp, at2.fp), (0, 1));
        assert_eq!((at4.tp, at4.fp, at4.ap), (1, 0, 1.0));
    }

    #[test]
    fn missing_class_is_zero_and_flagged() {
        let r = evaluate(
            &[vec![b(0.0, 0.0, 1, 0.5)]],
            &[vec![b(0.0, 0.0, 1, 1.0)]],
            2,
        )
        .unwrap();
        assert_eq!(r.classes_without_gt, vec![2]);
        assert_eq!(r.class_map, vec![1.0, 0.0]);
        assert_eq!(r.map, 0.5);
        assert!(evaluate(&[], &[vec![]], 1).is_err());
    }

    #[test]
    fn empty_detections_give_zero() {
        let r = evaluate(&[vec![], vec![]], &[vec![b(0.0, 0.0, 1, 1.0)], vec![]], 1).unwrap();
        assert_eq!(r.map, 0.0);
    }
}
