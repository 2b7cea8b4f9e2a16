//! End-to-end runs over seeded synthetic scenes.
//!
//! The backbone is untrained, so the head's heatmaps come from a scaffold:
//! per class, evidence `E = T + sigma * n` (Gaussian targets `T` plus seeded
//! standard-normal noise `n`) is appended to the backbone output `F` as
//! extra channels, the density heatmap (when enabled) is applied to the
//! whole stack, and a per-class linear readout of `[E_k, E_k * F, 1]` is
//! ridge-fitted to `T_k` on calibration scenes drawn from a disjoint seed
//! stream. The readout is rescaled so calibration centers sit at 1 and the
//! background mean at 0, then squashed by `sigmoid(kappa * (y - 0.5))`. Regression maps are
//! the exact encodings of the ground-truth boxes. This measures how much the
//! guidance features help separate true centers from noise; it makes no
//! claim about learned behavior.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{RunConfig, Toggles};
use super::eval::{evaluate, EvalResult};
use crate::detection::{
    decode, encode, mini_backbone, write_detections_csv, HeadOutput, LinearProbe, MiniBackbone,
    RidgeAccumulator,
};
use crate::error::{Error, Result};
use crate::fusion::{bev_downsample_chain, cascade_fuse, CascadeParams};
use crate::guidance::{
    apply_density, center_density, class_foreground_attention, rv_bev_attention, ClassAttnParams,
    DensityHeatmap, RvBevAttnParams,
};
use crate::projection::{pillar, pillarize, rv_to_bev, BevCell, Reduce};
use crate::scene::{generate_scene, Box7, PanopticEstimate, PanopticOracle, Scene};
use crate::tensor::{conv2d, maxpool2d, sigmoid, ConvParams, Tensor};

/// Independent random streams derived from a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Model = 1,
    Scene = 2,
    Panoptic = 3,
    Evidence = 4,
}

/// Evaluation scenes and calibration scenes never share seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Eval = 0,
    Calibration = 1,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, stream: Stream, split: Split, index: u64) -> u64 {
    let s = splitmix64(splitmix64(seed) ^ ((stream as u64) << 8 | split as u64));
    splitmix64(s ^ index)
}

/// Generator seed of evaluation scene `index` in a run seeded with `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, Stream::Scene, Split::Eval, index as u64)
}

/// Evaluation scene `index` of a run, as `run` and `gen` produce it.
pub fn eval_scene(cfg: &RunConfig, seed: u64, index: usize) -> Result<Scene> {
    generate_scene(&cfg.scene, scene_seed(seed, index))
}

/// Fixed-seed weights. They depend only on `encoder.seed`, so every run
/// seed evaluates the same network on different scenes.
#[derive(Debug, Clone)]
pub struct Model {
    pub oracle: PanopticOracle,
    pub cascade: CascadeParams,
    pub attention: RvBevAttnParams,
    /// 1x1 pillar stem used when the multi-view path is off.
    pub stem: ConvParams,
    pub class_attn: ClassAttnParams,
    pub backbone: MiniBackbone,
}

impl Model {
    pub fn new(cfg: &RunConfig) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.encoder.seed, Stream::Model, Split::Eval, 0));
        let encoder = cfg.encoder;
        let w = cfg.model.width;
        let cascade = CascadeParams::random(&cfg.cascade, true, &mut rng);
        let attention = RvBevAttnParams::random(
            pillar::COUNT,
            cfg.cascade.bev_out_channels(),
            w,
            cfg.model.attention_ratio,
            &mut rng,
        );
        let stem = ConvParams::random(w, pillar::COUNT, 1, 1, true, &mut rng);
        let class_attn = ClassAttnParams::random(
            w,
            cfg.model.class_branch_channels,
            cfg.num_classes(),
            &mut rng,
        );
        let backbone = MiniBackbone::random(w, w, true, &mut rng);
        Self {
            oracle: PanopticOracle::new(cfg.rv, encoder),
            cascade,
            attention,
            stem,
            class_attn,
            backbone,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Needs {
    mba: bool,
    cfa: bool,
    cdh: bool,
}

impl Needs {
    fn of(rows: &[Toggles]) -> Self {
        Self {
            mba: rows.iter().any(|t| t.mba),
            cfa: rows.iter().any(|t| t.cfa),
            cdh: rows.iter().any(|t| t.cdh),
        }
    }
}

/// Everything about one scene that does not depend on the toggles.
struct Prepared {
    scene: Scene,
    targets: Tensor,
    evidence: Tensor,
    pillars: Tensor,
    encoded: HeadOutput,
    rv_bev: Option<Tensor>,
    probs_bev: Option<Vec<Tensor>>,
    density: Option<DensityHeatmap>,
}

/// Per-point foreground class probabilities laid out on the range image.
fn class_prob_image(pan: &PanopticEstimate) -> Result<Tensor> {
    let img = &pan.range_image;
    let (h, w) = (img.spec.height, img.spec.width);
    let k = pan.num_classes;
    let mut t = Tensor::zeros(k, h, w);
    for (pix, point) in img.point_of_pixel.iter().enumerate() {
        if let Some(i) = point {
            let probs = pan.probs(*i);
            for c in 0..k {
                t.data_mut()[c * h * w + pix] = probs[c + 1];
            }
        }
    }
    Ok(t)
}

fn prepare(
    cfg: &RunConfig,
    model: &Model,
    seed: u64,
    split: Split,
    index: usize,
    needs: Needs,
) -> Result<Prepared> {
    let i = index as u64;
    let k = cfg.num_classes();
    let scene = generate_scene(&cfg.scene, derive_seed(seed, Stream::Scene, split, i))?;
    let pan = model.oracle.estimate(
        &scene,
        &cfg.noise,
        derive_seed(seed, Stream::Panoptic, split, i),
    )?;
    let pillars = pillarize(&scene.points, &cfg.bev)?;
    let encoded = encode(&scene.boxes, &cfg.bev, k, &cfg.head.targets)?;
    let targets =
        crate::detection::gaussian_targets_with(&scene.boxes, &cfg.bev, k, &cfg.head.targets)?
            .heatmap;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Evidence, split, i));
    let sigma = cfg.head.heatmap_sigma;
    let mut evidence = targets.clone();
    for v in evidence.data_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * n;
    }

    let fine = cfg.bev.refined(cfg.refine_factor());
    let rv_bev = if needs.mba {
        let f = &pan.rv_feats;
        let fused = cascade_fuse(&f.r1, &f.r2, &f.r3, &model.cascade)?;
        let scattered = rv_to_bev(&fused, &pan.range_image, &scene.points, &fine, Reduce::Max)?;
        Some(bev_downsample_chain(&scattered, &model.cascade)?)
    } else {
        None
    };
    let probs_bev = if needs.cfa {
        let img = class_prob_image(&pan)?;
        let scattered = rv_to_bev(&img, &pan.range_image, &scene.points, &fine, Reduce::Max)?;
        let f = cfg.refine_factor();
        let pooled = maxpool2d(&scattered, f, f)?;
        Some(
            (0..k)
                .map(|c| pooled.slice_channels(c..c + 1))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let density = if needs.cdh {
        Some(center_density(&scene.points, &pan, &cfg.bev)?)
    } else {
        None
    };
    Ok(Prepared {
        scene,
        targets,
        evidence,
        pillars,
        encoded,
        rv_bev,
        probs_bev,
        density,
    })
}

fn missing(what: &str) -> Error {
    Error::Domain {
        op: "pipeline",
        detail: format!("{what} was not prepared"),
    }
}

/// Backbone output for the `(mba, cfa)` part of a toggle row.
fn backbone_features(p: &Prepared, model: &Model, t: Toggles) -> Result<Tensor> {
    let x = if t.mba {
        let rv = p
            .rv_bev
            .as_ref()
            .ok_or_else(|| missing("RV-in-BEV features"))?;
        rv_bev_attention(&p.pillars, rv, &model.attention)?
    } else {
        conv2d(&p.pillars, &model.stem)?
    };
    let x = if t.cfa {
        let probs = p
            .probs_bev
            .as_ref()
            .ok_or_else(|| missing("class probability maps"))?;
        class_foreground_attention(&x, probs, &model.class_attn)?
    } else {
        x
    };
    mini_backbone(&x, &model.backbone)
}

/// `[F | E]`, with the density heatmap applied when `cdh` is on.
fn head_input(p: &Prepared, backbone: &Tensor, t: Toggles) -> Result<Tensor> {
    let stack = Tensor::concat(&[backbone, &p.evidence])?;
    if t.cdh {
        apply_density(
            &stack,
            p.density
                .as_ref()
                .ok_or_else(|| missing("density heatmap"))?,
        )
    } else {
        Ok(stack)
    }
}

fn readout_dim(width: usize) -> usize {
    width + 2
}

/// Readout features of class `k` at flat cell `cell`: `[E_k, E_k * F.., 1]`.
/// Backbone features only gate the evidence; they never add score on their
/// own, so peaks stay where the evidence has them.
fn readout_features(stack: &Tensor, width: usize, k: usize, cell: usize, out: &mut Vec<f64>) {
    let plane = stack.plane();
    let d = stack.data();
    let e = d[(width + k) * plane + cell];
    out.push(e);
    out.extend((0..width).map(|c| e * d[c * plane + cell]));
    out.push(1.0);
}

/// Ridge readout rescaled so the calibration background mean maps to 0 and
/// the mean at ground-truth center cells maps to 1.
#[derive(Debug, Clone)]
struct Readout {
    probe: LinearProbe,
    offset: f64,
    scale: f64,
}

impl Readout {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.probe.predict(x) - self.offset) * self.scale
    }
}

/// Calibration sums of one (row, class).
#[derive(Debug, Clone)]
struct CalibSums {
    ridge: RidgeAccumulator,
    all: Vec<f64>,
    centers: Vec<f64>,
    center_count: usize,
}

impl CalibSums {
    fn new(dim: usize) -> Self {
        Self {
            ridge: RidgeAccumulator::new(dim),
            all: vec![0.0; dim],
            centers: vec![0.0; dim],
            center_count: 0,
        }
    }

    fn merge(&mut self, o: &CalibSums) -> Result<()> {
        self.ridge.merge(&o.ridge)?;
        self.all.iter_mut().zip(&o.all).for_each(|(a, b)| *a += b);
        self.centers
            .iter_mut()
            .zip(&o.centers)
            .for_each(|(a, b)| *a += b);
        self.center_count += o.center_count;
        Ok(())
    }

    fn solve(&self, lambda: f64) -> Result<Readout> {
        let probe = self.ridge.solve(lambda)?;
        let n = self.ridge.rows().max(1) as f64;
        let mean_all: Vec<f64> = self.all.iter().map(|v| v / n).collect();
        let offset = probe.predict(&mean_all);
        let scale = if self.center_count == 0 {
            1.0
        } else {
            let m = self.center_count as f64;
            let mean_c: Vec<f64> = self.centers.iter().map(|v| v / m).collect();
            let gap = probe.predict(&mean_c) - offset;
            if gap > 0.0 {
                1.0 / gap
            } else {
                1.0
            }
        };
        Ok(Readout {
            probe,
            offset,
            scale,
        })
    }
}

/// Head inputs of every requested row, sharing backbone passes.
fn row_inputs(p: &Prepared, model: &Model, rows: &[Toggles]) -> Result<Vec<Tensor>> {
    let mut cache: HashMap<(bool, bool), Tensor> = HashMap::new();
    rows.iter()
        .map(|&t| {
            let key = (t.mba, t.cfa);
            if let Entry::Vacant(slot) = cache.entry(key) {
                slot.insert(backbone_features(p, model, t)?);
            }
            head_input(p, &cache[&key], t)
        })
        .collect()
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain {
            op: "thread pool",
            detail: e.to_string(),
        })
}

/// Fits one readout per (row, class) on the calibration scenes.
fn calibrate(
    cfg: &RunConfig,
    model: &Model,
    seed: u64,
    rows: &[Toggles],
    needs: Needs,
) -> Result<Vec<Vec<Readout>>> {
    let k = cfg.num_classes();
    let w = cfg.model.width;
    let dim = readout_dim(w);
    let per_scene: Vec<Vec<Vec<CalibSums>>> = (0..cfg.head.calibration_scenes)
        .into_par_iter()
        .map(|i| {
            let p = prepare(cfg, model, seed, Split::Calibration, i, needs)?;
            let inputs = row_inputs(&p, model, rows)?;
            let plane = p.targets.plane();
            let mut feats = Vec::with_capacity(plane * dim);
            let mut per_row = Vec::with_capacity(rows.len());
            for stack in &inputs {
                let mut per_class = Vec::with_capacity(k);
                for c in 0..k {
                    let mut sums = CalibSums::new(dim);
                    let t = p.targets.channel(c);
                    feats.clear();
                    for cell in 0..plane {
                        readout_features(stack, w, c, cell, &mut feats);
                    }
                    sums.ridge.add_rows(&feats, t)?;
                    for (cell, row) in feats.chunks_exact(dim).enumerate() {
                        sums.all.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                        if t[cell] == 1.0 {
                            sums.centers.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                            sums.center_count += 1;
                        }
                    }
                    per_class.push(sums);
                }
                per_row.push(per_class);
            }
            Ok(per_row)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![vec![CalibSums::new(dim); k]; rows.len()];
    for scene in &per_scene {
        for (row_acc, scene_row) in total.iter_mut().zip(scene) {
            for (acc, part) in row_acc.iter_mut().zip(scene_row) {
                acc.merge(part)?;
            }
        }
    }
    total
        .iter()
        .map(|row| row.iter().map(|a| a.solve(cfg.head.ridge_lambda)).collect())
        .collect()
}

fn scores(cfg: &RunConfig, stack: &Tensor, readouts: &[Readout]) -> Tensor {
    let (k, w) = (cfg.num_classes(), cfg.model.width);
    let (rows, cols) = (stack.height(), stack.width());
    let mut out = Tensor::zeros(k, rows, cols);
    let plane = rows * cols;
    let mut feats = Vec::with_capacity(readout_dim(w));
    for (c, readout) in readouts.iter().enumerate() {
        for cell in 0..plane {
            feats.clear();
            readout_features(stack, w, c, cell, &mut feats);
            out.data_mut()[c * plane + cell] =
                sigmoid(cfg.head.kappa * (readout.eval(&feats) - 0.5));
        }
    }
    out
}

/// Instances whose density maximum over their BEV footprint is uniquely at
/// the cell holding the box center, and the number of instances checked.
pub fn density_peaks_at_centers(h: &DensityHeatmap, boxes: &[Box7]) -> (usize, usize) {
    let grid = &h.grid;
    let mut hits = 0;
    let mut total = 0;
    for b in boxes {
        let Some(center) = grid.bin_xy(b.cx, b.cy) else {
            continue;
        };
        total += 1;
        let peak = h.counts[grid.flat(center)];
        let reach = (b.bev_radius() / grid.cell).ceil() as usize + 1;
        let mut unique = peak > 0;
        for row in center.row.saturating_sub(reach)..=(center.row + reach).min(grid.rows() - 1) {
            for col in center.col.saturating_sub(reach)..=(center.col + reach).min(grid.cols() - 1)
            {
                let cell = BevCell { row, col };
                if cell == center {
                    continue;
                }
                let (x, y) = grid.cell_center(cell);
                let inside = b.contains(&crate::scene::Point::new(x, y, b.cz, 0.0), 0.0);
                if inside && h.counts[grid.flat(cell)] >= peak {
                    unique = false;
                }
            }
        }
        hits += unique as usize;
    }
    (hits, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct Diagnostics {
    pub ground_truth_boxes: usize,
    /// Boxes whose center lies outside the BEV grid.
    pub boxes_off_grid: usize,
    /// Instances whose density peak sits at their center cell (density runs only).
    pub density_peaks_at_center: usize,
    pub density_instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowResult {
    pub toggles: Toggles,
    pub eval: EvalResult,
    pub detections: Vec<Vec<Box7>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub rows: Vec<RowResult>,
    pub ground_truth: Vec<Vec<Box7>>,
    pub diagnostics: Diagnostics,
}

struct SceneResult {
    detections: Vec<Vec<Box7>>,
    boxes: Vec<Box7>,
    off_grid: usize,
    density: Option<(usize, usize)>,
}

/// Runs every toggle row in `rows` over the evaluation scenes of `seed`.
/// Rows share scenes, noise draws and weights, so their differences are
/// paired. `heatmap_dir` receives one density PGM/CSV pair per scene.
pub fn evaluate_rows(
    cfg: &RunConfig,
    seed: u64,
    rows: &[Toggles],
    heatmap_dir: Option<&Path>,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let pool = thread_pool(cfg.workers)?;
    pool.install(|| evaluate_rows_inner(cfg, seed, rows, heatmap_dir))
}

fn evaluate_rows_inner(
    cfg: &RunConfig,
    seed: u64,
    rows: &[Toggles],
    heatmap_dir: Option<&Path>,
) -> Result<PipelineOutput> {
    let model = Model::new(cfg);
    let mut needs = Needs::of(rows);
    needs.cdh |= heatmap_dir.is_some();
    let probes = calibrate(cfg, &model, seed, rows, needs)?;
    let k = cfg.num_classes();

    let per_scene: Vec<SceneResult> = (0..cfg.scenes)
        .into_par_iter()
        .map(|i| {
            let p = prepare(cfg, &model, seed, Split::Eval, i, needs)?;
            let inputs = row_inputs(&p, &model, rows)?;
            let mut detections = Vec::with_capacity(rows.len());
            for (stack, row_probes) in inputs.iter().zip(&probes) {
                let head = HeadOutput {
                    heatmaps: scores(cfg, stack, row_probes),
                    regression: p.encoded.regression.clone(),
                    z_h: p.encoded.z_h.clone(),
                };
                detections
                    .push(decode(&head, &cfg.bev, cfg.head.k_max, cfg.head.score_min)?.boxes());
            }
            if let (Some(dir), Some(h)) = (heatmap_dir, &p.density) {
                h.write_pgm(dir.join(format!("scene_{i:04}_density.pgm")))?;
                h.write_csv(dir.join(format!("scene_{i:04}_density.csv")))?;
            }
            let off_grid = p
                .scene
                .boxes
                .iter()
                .filter(|b| cfg.bev.bin_xy(b.cx, b.cy).is_none())
                .count();
            Ok(SceneResult {
                density: p
                    .density
                    .as_ref()
                    .map(|h| density_peaks_at_centers(h, &p.scene.boxes)),
                detections,
                boxes: p.scene.boxes,
                off_grid,
            })
        })
        .collect::<Result<_>>()?;

    let ground_truth: Vec<Vec<Box7>> = per_scene.iter().map(|s| s.boxes.clone()).collect();
    let mut diagnostics = Diagnostics::default();
    for s in &per_scene {
        diagnostics.ground_truth_boxes += s.boxes.len();
        diagnostics.boxes_off_grid += s.off_grid;
        if let Some((hits, n)) = s.density {
            diagnostics.density_peaks_at_center += hits;
            diagnostics.density_instances += n;
        }
    }
    let rows = rows
        .iter()
        .enumerate()
        .map(|(r, &toggles)| {
            let detections: Vec<Vec<Box7>> =
                per_scene.iter().map(|s| s.detections[r].clone()).collect();
            Ok(RowResult {
                toggles,
                eval: evaluate(&detections, &ground_truth, k)?,
                detections,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PipelineOutput {
        rows,
        ground_truth,
        diagnostics,
    })
}

/// Configured row and the all-off baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub configured: RowResult,
    pub baseline: RowResult,
    pub ground_truth: Vec<Vec<Box7>>,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn delta_map(&self) -> f64 {
        self.configured.eval.map - self.baseline.eval.map
    }
}

/// Runs the configured toggles and the baseline on the same scenes. With an
/// `out_dir`, per-scene detections of the configured row are written as
/// CSV, and density heatmaps when `dump_heatmaps` is set.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let heatmap_dir = match (&cfg.out_dir, cfg.dump_heatmaps) {
        (Some(dir), true) => {
            let d = dir.join("heatmaps");
            std::fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let rows = [cfg.toggles, Toggles::default()];
    let out = evaluate_rows(cfg, cfg.seed, &rows, heatmap_dir.as_deref())?;
    let mut it = out.rows.into_iter();
    let configured = it.next().expect("two rows");
    let baseline = it.next().expect("two rows");
    if let Some(dir) = &cfg.out_dir {
        let d = dir.join("detections");
        std::fs::create_dir_all(&d)?;
        for (i, dets) in configured.detections.iter().enumerate() {
            write_detections_csv(dets, d.join(format!("scene_{i:04}.csv")))?;
        }
    }
    Ok(RunReport {
        configured,
        baseline,
        ground_truth: out.ground_truth,
        diagnostics: out.diagnostics,
    })
}

/// One ablation row: mAP per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub toggles: Toggles,
    pub per_seed: Vec<f64>,
}

impl AblationRow {
    pub fn mean(&self) -> f64 {
        self.per_seed.iter().sum::<f64>() / self.per_seed.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    /// Cumulative rows: none, +MBA, +MBA+CFA, +MBA+CFA+CDH.
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Per-seed `rows[to] - rows[from]`.
    pub fn deltas(&self, from: usize, to: usize) -> Vec<f64> {
        self.rows[to]
            .per_seed
            .iter()
            .zip(&self.rows[from].per_seed)
            .map(|(b, a)| b - a)
            .collect()
    }

    pub fn mba_deltas(&self) -> Vec<f64> {
        self.deltas(0, 1)
    }

    pub fn cfa_deltas(&self) -> Vec<f64> {
        self.deltas(1, 2)
    }

    pub fn cdh_deltas(&self) -> Vec<f64> {
        self.deltas(2, 3)
    }

    /// Whether mean mAP never decreases down the rows.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean() >= w[0].mean())
    }

    /// Rows as CSV: `row,mba,cfa,cdh,mean_map,seed_<s>...`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("row,mba,cfa,cdh,mean_map");
        for seed in &self.seeds {
            s.push_str(&format!(",seed_{seed}"));
        }
        s.push('\n');
        for r in &self.rows {
            let t = r.toggles;
            s.push_str(&format!(
                "{},{},{},{},{}",
                t.label(),
                t.mba as u8,
                t.cfa as u8,
                t.cdh as u8,
                super::metrics::fmt_f64(r.mean())
            ));
            for v in &r.per_seed {
                s.push_str(&format!(",{}", super::metrics::fmt_f64(*v)));
            }
            s.push('\n');
        }
        s
    }
}

/// The four cumulative toggle rows for every seed.
pub fn ablate(cfg: &RunConfig, seeds: &[u64]) -> Result<AblationTable> {
    cfg.validate()?;
    if seeds.len() < 3 {
        return Err(Error::Config(vec![format!(
            "ablation_seeds: at least 3 required, got {}",
            seeds.len()
        )]));
    }
    let rows = Toggles::ablation_rows();
    let mut table = AblationTable {
        seeds: seeds.to_vec(),
        rows: rows
            .iter()
            .map(|&toggles| AblationRow {
                toggles,
                per_seed: Vec::new(),
            })
            .collect(),
    };
    for &seed in seeds {
        let out = evaluate_rows(cfg, seed, &rows, None)?;
        for (row, r) in table.rows.iter_mut().zip(out.rows) {
            row.per_seed.push(r.eval.map);
        }
    }
    Ok(table)
}
