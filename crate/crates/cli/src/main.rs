use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgf::detection::read_detections_csv;
use pgf::harness::{
    ablate, eval_scene, evaluate, gradcheck_suite, run_pipeline, AblationMetrics, RunConfig,
    RunMetrics, Toggles, GRAD_TOLERANCE,
};
use pgf::scene::{read_scene_bin, read_scene_csv, write_scene_bin, write_scene_csv, Scene};

/// Exit status when a checked property does not hold.
const EXIT_PROPERTY: u8 = 2;
/// Exit status for invalid input, configuration or I/O failure.
const EXIT_INVALID: u8 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "pgf",
    version,
    about = "Panoptic-guided BEV detection pipeline on synthetic scenes"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of evaluation scenes.
    #[arg(long, global = true)]
    scenes: Option<usize>,
    /// Comma-separated subset of mba,cfa,cdh, or `none`.
    #[arg(long, global = true, value_parser = Toggles::parse)]
    toggles: Option<Toggles>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for scene-level parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the evaluation scenes of a run as binary and CSV files.
    Gen,
    /// Run the pipeline and the baseline; write metrics JSON.
    Run {
        /// Also write per-scene density heatmaps (PGM and CSV).
        #[arg(long)]
        dump_heatmaps: bool,
    },
    /// Score detection CSVs against scene files.
    Eval {
        /// Directory of `scene_NNNN.bin` or `scene_NNNN.csv` files.
        #[arg(long)]
        scene_dir: PathBuf,
        /// Directory of `scene_NNNN.csv` detection files.
        #[arg(long)]
        det_dir: PathBuf,
    },
    /// Run the four cumulative toggle rows over several seeds.
    Ablate {
        /// Comma-separated seeds (at least 3).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Exit with status 2 unless the MBA and CDH mean deltas are positive.
        #[arg(long)]
        strict: bool,
    },
    /// Finite-difference checks of every differentiable op.
    Gradcheck {
        /// Instances per op.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

enum Failure {
    Invalid(String),
    Property(String),
}

impl From<pgf::Error> for Failure {
    fn from(e: pgf::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_json_file(path)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.scenes {
        cfg.scenes = v;
    }
    if let Some(v) = c.toggles {
        cfg.toggles = v;
    }
    if let Some(v) = &c.out {
        cfg.out_dir = Some(v.clone());
    }
    if let Some(v) = c.workers {
        cfg.workers = v;
    }
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn scene_name(i: usize) -> String {
    format!("scene_{i:04}")
}

fn cmd_gen(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.validate()?;
    let dir = cfg
        .out_dir
        .as_ref()
        .ok_or_else(|| Failure::Invalid("gen needs --out DIR".into()))?;
    std::fs::create_dir_all(dir)?;
    for i in 0..cfg.scenes {
        let scene = eval_scene(cfg, cfg.seed, i)?;
        write_scene_bin(&scene, dir.join(format!("{}.bin", scene_name(i))))?;
        write_scene_csv(&scene, dir.join(format!("{}.csv", scene_name(i))))?;
    }
    eprintln!("wrote {} scenes to {}", cfg.scenes, dir.display());
    Ok(())
}

fn cmd_run(mut cfg: RunConfig, dump_heatmaps: bool) -> Result<(), Failure> {
    cfg.dump_heatmaps |= dump_heatmaps;
    let report = run_pipeline(&cfg)?;
    let metrics = RunMetrics::from_report(&cfg, &report);
    eprintln!(
        "{}: mAP {:.4}, baseline {:.4}, delta {:+.4}",
        cfg.toggles.label(),
        report.configured.eval.map,
        report.baseline.eval.map,
        report.delta_map()
    );
    write_or_print(
        cfg.out_dir.as_deref(),
        "metrics.json",
        &metrics.to_json_string(),
    )
}

fn read_scene(dir: &Path, name: &str) -> Result<Scene, Failure> {
    let bin = dir.join(format!("{name}.bin"));
    let csv = dir.join(format!("{name}.csv"));
    let (path, scene) = if bin.exists() {
        (&bin, read_scene_bin(&bin))
    } else {
        (&csv, read_scene_csv(&csv))
    };
    scene.map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn cmd_eval(cfg: &RunConfig, scene_dir: &Path, det_dir: &Path) -> Result<(), Failure> {
    let mut names: Vec<String> = std::fs::read_dir(det_dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".csv").map(str::to_owned))
        .filter(|n| n.starts_with("scene_"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Failure::Invalid(format!(
            "no scene_*.csv detections in {}",
            det_dir.display()
        )));
    }
    let mut gts = Vec::with_capacity(names.len());
    let mut dets = Vec::with_capacity(names.len());
    let mut k = 0;
    for name in &names {
        let scene = read_scene(scene_dir, name)?;
        k = k.max(scene.num_classes);
        gts.push(scene.boxes);
        let path = det_dir.join(format!("{name}.csv"));
        dets.push(
            read_detections_csv(&path)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?,
        );
    }
    let result = evaluate(&dets, &gts, k)?;
    eprintln!("mAP {:.4} over {} scenes", result.map, names.len());
    let metrics = RunMetrics::from_eval(&cfg.benchmark, cfg.seed, result, names.len());
    write_or_print(
        cfg.out_dir.as_deref(),
        "metrics.json",
        &metrics.to_json_string(),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn cmd_ablate(mut cfg: RunConfig, seeds: Option<Vec<u64>>, strict: bool) -> Result<(), Failure> {
    if let Some(s) = seeds {
        cfg.ablation_seeds = s;
    }
    let table = ablate(&cfg, &cfg.ablation_seeds)?;
    let metrics = AblationMetrics::new(&cfg, &table);
    let (mba, cdh) = (mean(&metrics.mba_deltas), mean(&metrics.cdh_deltas));
    eprintln!("mba deltas {:?} (mean {mba:+.4})", metrics.mba_deltas);
    eprintln!(
        "cfa deltas {:?} (mean {:+.4})",
        metrics.cfa_deltas,
        mean(&metrics.cfa_deltas)
    );
    eprintln!("cdh deltas {:?} (mean {cdh:+.4})", metrics.cdh_deltas);
    eprintln!("monotone: {}", metrics.monotone);
    let csv = table.to_csv_string();
    match cfg.out_dir.as_deref() {
        Some(dir) => {
            write_or_print(Some(dir), "ablation.csv", &csv)?;
            write_or_print(Some(dir), "ablation.json", &metrics.to_json_string())?;
        }
        None => print!("{csv}"),
    }
    if strict && !(mba > 0.0 && cdh > 0.0) {
        return Err(Failure::Property(format!(
            "expected positive mean deltas, got mba {mba:+.6} and cdh {cdh:+.6}"
        )));
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &RunConfig, instances: usize) -> Result<(), Failure> {
    if instances == 0 {
        return Err(Failure::Invalid("--instances must be at least 1".into()));
    }
    let reports = gradcheck_suite(instances, cfg.seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!(
            "{status} {:<24} instances={} max_rel_err={:.3e}",
            r.op, r.instances, r.max_rel_error
        );
        if !r.passed() {
            failed.push(r.op.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!(
            "relative error at or above {GRAD_TOLERANCE:e} in: {}",
            failed.join(", ")
        )))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Gen => cmd_gen(&cfg),
        Command::Run { dump_heatmaps } => cmd_run(cfg, dump_heatmaps),
        Command::Eval { scene_dir, det_dir } => cmd_eval(&cfg, &scene_dir, &det_dir),
        Command::Ablate { seeds, strict } => cmd_ablate(cfg, seeds, strict),
        Command::Gradcheck { instances } => cmd_gradcheck(&cfg, instances),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Property(msg)) => {
            eprintln!("property failed: {msg}");
            ExitCode::from(EXIT_PROPERTY)
        }
    }
}
