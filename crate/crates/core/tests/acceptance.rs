//! Acceptance gate: one pass/fail line per criterion, non-zero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pgf::detection::{decode, encode, TargetConfig};
use pgf::fusion::{cbam, CbamParams};
use pgf::guidance::{center_density, class_foreground_attention, density_value, ClassAttnParams};
use pgf::harness::{
    ablate, density_peaks_at_centers, eval_scene, evaluate, gradcheck_suite, match_and_ap,
    run_pipeline, RunConfig, RunMetrics, DISTANCE_THRESHOLDS,
};
use pgf::projection::{pillarize, rv_project, rv_to_bev, BevSpec, Reduce, RvSpec};
use pgf::scene::{oracle_panoptic, Box7, NoiseConfig, Point};
use pgf::tensor::{conv2d, depth2space, space2depth, ConvParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn density_closed_form_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut counts: Vec<u64> = (0..10_000)
        .map(|_| (10f64.powf(rng.random_range(0.0..6.0)) - 1.0).round() as u64)
        .collect();
    counts.extend([0, 1, 2, 10, 999_999, 1_000_000]);
    for n in counts {
        worst = worst.max((density_value(n) - density_closed_form(n)).abs());
    }
    let exact = density_value(0) == 0.0 && density_value(1) == 0.6;
    outcome(
        worst <= 1e-12 && exact,
        format!(
            "max |err| {worst:.2e}, n=0 -> {}, n=1 -> {}",
            density_value(0),
            density_value(1)
        ),
    )
}

fn random_points(n: usize, half: f64, spec: &BevSpec, rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let (mut x, mut y) = (rng.random_range(-half..half), rng.random_range(-half..half));
            if i % 7 == 0 {
                // Exactly on a cell edge.
                x = spec.x_min
                    + spec.cell * rng.random_range(0..(2.0 * half / spec.cell) as i64) as f64;
            }
            if i % 11 == 0 {
                y = half;
            }
            let z = rng.random_range(-1.5..0.3);
            Point::new(x, y, z, rng.random_range(0.0..1.0))
        })
        .filter(|p| p.x != 0.0 || p.y != 0.0)
        .collect()
}

fn kernel_oracles() -> Outcome {
    const N: usize = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut conv, mut pil, mut rvb, mut cb) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..N {
        let (ci, co) = (rng.random_range(1..5), rng.random_range(1..5));
        let (kh, kw) = (rng.random_range(1..5), rng.random_range(1..5));
        let p = ConvParams::random(co, ci, kh, kw, rng.random_bool(0.5), &mut rng)
            .with_stride(rng.random_range(1..3))
            .with_dilation(rng.random_range(1..3))
            .with_padding(rng.random_range(0..3));
        let x = random_tensor(
            ci,
            rng.random_range(8..14),
            rng.random_range(8..14),
            &mut rng,
        );
        conv = conv.max(max_abs_diff(
            conv2d(&x, &p).unwrap().data(),
            &conv_oracle(&x, &p),
        ));

        let spec = BevSpec::square(4.0, [0.25, 0.5, 1.0][rng.random_range(0..3)]);
        let points = random_points(rng.random_range(1..300), 5.0, &spec, &mut rng);
        pil = pil.max(max_abs_diff(
            pillarize(&points, &spec).unwrap().data(),
            &pillarize_oracle(&points, &spec),
        ));

        let rv = RvSpec {
            height: 16,
            width: 64,
            incl_min: -0.9,
            incl_max: 0.1,
        };
        let img = rv_project(&points, &rv).unwrap();
        let ratio = [1, 2, 4][rng.random_range(0..3)];
        let feats = random_tensor(rng.random_range(1..4), 16 / ratio, 64 / ratio, &mut rng);
        let reduce = if rng.random_bool(0.5) {
            Reduce::Max
        } else {
            Reduce::Mean
        };
        let got = rv_to_bev(&feats, &img, &points, &spec, reduce).unwrap();
        rvb = rvb.max(max_abs_diff(
            got.data(),
            &rv_to_bev_oracle(&feats, &img, &points, &spec, reduce),
        ));

        let c = rng.random_range(1..9);
        let params = CbamParams::random(
            c,
            rng.random_range(1..5),
            [1, 3, 7][rng.random_range(0..3)],
            &mut rng,
        );
        let x = random_tensor(
            c,
            rng.random_range(2..10),
            rng.random_range(2..10),
            &mut rng,
        );
        cb = cb.max(max_abs_diff(
            cbam(&x, &params).unwrap().data(),
            &cbam_oracle(&x, &params),
        ));
    }
    let pass = [conv, pil, rvb, cb].iter().all(|&e| e <= 1e-12);
    outcome(
        pass,
        format!("{N} instances each; max |err| conv2d {conv:.1e}, pillarize {pil:.1e}, rv_to_bev {rvb:.1e}, cbam {cb:.1e}"),
    )
}

fn gradient_suite() -> Outcome {
    let reports = gradcheck_suite(20, 3).unwrap();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.op.as_str())
        .collect();
    let detail = if failed.is_empty() {
        format!(
            "{} ops x 20 instances, worst rel err {worst:.2e}",
            reports.len()
        )
    } else {
        format!("failed: {}", failed.join(", "))
    };
    outcome(failed.is_empty() && worst < 1e-4, detail)
}

fn separated_boxes(n: usize, k: u32, rng: &mut ChaCha8Rng) -> Vec<Box7> {
    let mut boxes: Vec<Box7> = Vec::new();
    while boxes.len() < n {
        let b = Box7 {
            cx: rng.random_range(-22.0..22.0),
            cy: rng.random_range(-22.0..22.0),
            cz: rng.random_range(-1.5..0.5),
            l: rng.random_range(0.5..5.0),
            w: rng.random_range(0.5..2.5),
            h: rng.random_range(1.0..2.0),
            yaw: rng.random_range(-3.1..3.1),
            class_id: rng.random_range(1..=k),
            score: 1.0,
        };
        if boxes.iter().all(|o| o.bev_distance(&b) > 12.0) {
            boxes.push(b);
        }
    }
    boxes
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut layout_ok = true;
    for _ in 0..100 {
        let x = random_tensor(
            rng.random_range(1..6),
            2 * rng.random_range(1..8),
            2 * rng.random_range(1..8),
            &mut rng,
        );
        layout_ok &= depth2space(&space2depth(&x).unwrap()).unwrap() == x;
    }
    let grid = BevSpec::default();
    let mut worst = 0.0f64;
    let mut counts_ok = true;
    for _ in 0..100 {
        let k = 3;
        let boxes = separated_boxes(rng.random_range(1..6), k, &mut rng);
        let head = encode(&boxes, &grid, k as usize, &TargetConfig::default()).unwrap();
        let dets = decode(&head, &grid, 100, 0.5).unwrap().boxes();
        counts_ok &= dets.len() == boxes.len();
        for b in &boxes {
            let Some(d) = dets
                .iter()
                .filter(|d| d.class_id == b.class_id)
                .min_by(|p, q| p.bev_distance(b).total_cmp(&q.bev_distance(b)))
            else {
                counts_ok = false;
                continue;
            };
            for (u, v) in [
                (d.cx, b.cx),
                (d.cy, b.cy),
                (d.cz, b.cz),
                (d.l, b.l),
                (d.w, b.w),
                (d.h, b.h),
                (d.yaw, b.yaw),
            ] {
                worst = worst.max((u - v).abs());
            }
        }
    }
    outcome(
        layout_ok && counts_ok && worst <= 1e-9,
        format!("100 layout round trips identical: {layout_ok}; 100 encode/decode scenes, max |err| {worst:.2e}"),
    )
}

fn zero_noise_guidance() -> Outcome {
    let cfg = RunConfig::synth_v1();
    let (mut hits, mut total) = (0, 0);
    for i in 0..32 {
        let scene = eval_scene(&cfg, 100, i).unwrap();
        let est = oracle_panoptic(&scene, &NoiseConfig::default(), i as u64).unwrap();
        let h = center_density(&scene.points, &est, &cfg.bev).unwrap();
        let (a, b) = density_peaks_at_centers(&h, &scene.boxes);
        hits += a;
        total += b;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut identity = true;
    for _ in 0..20 {
        let (c, k) = (rng.random_range(1..9), rng.random_range(1..5));
        let x = random_tensor(
            c,
            rng.random_range(1..12),
            rng.random_range(1..12),
            &mut rng,
        );
        let p = ClassAttnParams::random(c, rng.random_range(1..5), k, &mut rng);
        let zeros = vec![Tensor::zeros(1, x.height(), x.width()); k];
        identity &= class_foreground_attention(&x, &zeros, &p).unwrap() == x;
    }
    outcome(
        total > 0 && hits == total && identity,
        format!("density peaks at centers {hits}/{total} over 32 scenes; zero-probability CFA is identity: {identity}"),
    )
}

fn ap_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 200 {
        let (dets, gts) = small_ap_case(&mut rng);
        for class_id in 1..=2 {
            for d in DISTANCE_THRESHOLDS {
                let got = match_and_ap(&dets, &gts, class_id, d);
                match ap_oracle(&dets, &gts, class_id, d) {
                    Some(want) => worst = worst.max((got.ap - want).abs()),
                    None => worst = worst.max(got.ap.abs() + f64::from(!got.no_ground_truth)),
                }
            }
        }
        cases += 1;
    }
    let cfg = RunConfig::synth_v1();
    let gts: Vec<Vec<Box7>> = (0..8)
        .map(|i| eval_scene(&cfg, 0, i).unwrap().boxes)
        .collect();
    let perfect = evaluate(&gts, &gts, cfg.num_classes()).unwrap().map;
    outcome(
        worst <= 1e-12 && perfect == 1.0,
        format!("{cases} cases, max |err| {worst:.2e}; perfect mAP {perfect}"),
    )
}

fn ablation_direction() -> Outcome {
    let mut cfg = RunConfig::synth_v1();
    cfg.workers = 1;
    let table = ablate(&cfg, &cfg.ablation_seeds).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mba, cdh) = (table.mba_deltas(), table.cdh_deltas());
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.mean()))
        .collect();
    outcome(
        mean(&mba) > 0.0 && mean(&cdh) > 0.0,
        format!(
            "row means [{}]; mba deltas {:?} (mean {:+.4}); cdh deltas {:?} (mean {:+.4})",
            rows.join(", "),
            mba.iter().map(|d| format!("{d:+.4}")).collect::<Vec<_>>(),
            mean(&mba),
            cdh.iter().map(|d| format!("{d:+.4}")).collect::<Vec<_>>(),
            mean(&cdh)
        ),
    )
}

fn metrics_bytes(workers: usize) -> String {
    let mut cfg = RunConfig::synth_v1();
    cfg.workers = workers;
    let report = run_pipeline(&cfg).unwrap();
    let mut m = RunMetrics::from_report(&cfg, &report);
    m.timestamp = 0;
    m.to_json_string()
}

fn determinism() -> Outcome {
    let runs: Vec<String> = [1, 1, 8, 8].into_iter().map(metrics_bytes).collect();
    let pass = runs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        pass,
        format!(
            "4 runs (workers 1, 1, 8, 8), {} bytes each, identical: {pass}",
            runs[0].len()
        ),
    )
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 8] = [
        (
            "density closed form",
            Duration::from_secs(1),
            density_closed_form_check,
        ),
        ("kernel oracles", Duration::from_secs(30), kernel_oracles),
        ("gradient suite", Duration::from_secs(60), gradient_suite),
        ("round trips", Duration::from_secs(10), round_trips),
        (
            "zero-noise guidance",
            Duration::from_secs(30),
            zero_noise_guidance,
        ),
        (
            "AP oracle equivalence",
            Duration::from_secs(30),
            ap_oracle_equivalence,
        ),
        (
            "ablation direction",
            Duration::from_secs(300),
            ablation_direction,
        ),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= budget;
        failures += usize::from(!pass);
        println!(
            "{} {name}: {} [{:.2}s / {}s budget]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
