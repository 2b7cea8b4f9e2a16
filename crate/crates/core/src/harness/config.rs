use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::TargetConfig;
use crate::error::{Error, Result};
use crate::fusion::CascadeConfig;
use crate::projection::{BevSpec, RvSpec};
use crate::scene::{EncoderConfig, NoiseConfig, SceneConfig};

/// Which guidance modules are active. All off is the baseline detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    /// Multi-view backbone: cascade fusion, RV-to-BEV and RV-BEV attention.
    pub mba: bool,
    /// Class-wise foreground attention.
    pub cfa: bool,
    /// Center density heatmap.
    pub cdh: bool,
}

impl Toggles {
    pub const ALL: Toggles = Toggles {
        mba: true,
        cfa: true,
        cdh: true,
    };

    /// The four cumulative rows of the ablation table.
    pub fn ablation_rows() -> [Toggles; 4] {
        [
            Toggles::default(),
            Toggles {
                mba: true,
                ..Toggles::default()
            },
            Toggles {
                mba: true,
                cfa: true,
                cdh: false,
            },
            Toggles::ALL,
        ]
    }

    /// Parses a comma-separated subset of `mba,cfa,cdh`; `none` or an empty
    /// string turns everything off.
    pub fn parse(s: &str) -> std::result::Result<Toggles, String> {
        let mut t = Toggles::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "mba" => t.mba = true,
                "cfa" => t.cfa = true,
                "cdh" => t.cdh = true,
                "none" => {}
                other => return Err(format!("unknown toggle `{other}` (expected mba, cfa, cdh)")),
            }
        }
        Ok(t)
    }

    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.mba, "mba"), (self.cfa, "cfa"), (self.cdh, "cdh")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        if parts.is_empty() {
            "baseline".into()
        } else {
            parts.join("+")
        }
    }
}

/// Fixed-seed network widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel width of the stem output and the mini backbone.
    pub width: usize,
    pub class_branch_channels: usize,
    pub attention_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 16,
            class_branch_channels: 4,
            attention_ratio: 4,
        }
    }
}

/// Heatmap scaffold of the untrained head, and decoding limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    /// Standard deviation of the additive noise on the injected evidence.
    pub heatmap_sigma: f64,
    /// Slope of the sigmoid mapping probe output to a score.
    pub kappa: f64,
    pub ridge_lambda: f64,
    /// Scenes, from a seed stream disjoint from the evaluation scenes,
    /// used to fit the linear readout.
    pub calibration_scenes: usize,
    pub k_max: usize,
    pub score_min: f64,
    pub targets: TargetConfig,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            heatmap_sigma: 0.3,
            kappa: 8.0,
            ridge_lambda: 1.0,
            calibration_scenes: 8,
            k_max: 100,
            score_min: 0.01,
            targets: TargetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form label copied into the metrics.
    pub benchmark: String,
    pub seed: u64,
    pub scenes: usize,
    pub workers: usize,
    pub toggles: Toggles,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub rv: RvSpec,
    pub bev: BevSpec,
    pub encoder: EncoderConfig,
    pub cascade: CascadeConfig,
    pub model: ModelConfig,
    pub head: HeadConfig,
    /// Seeds of the ablation runs.
    pub ablation_seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// Write per-scene density heatmaps (PGM + CSV) under `out_dir`.
    pub dump_heatmaps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::synth_v1()
    }
}

impl RunConfig {
    /// The standard benchmark: 64 scenes, evidence noise 0.3, offset noise
    /// 0.2 m, label flip 0.05, five seeds.
    pub fn synth_v1() -> Self {
        Self {
            benchmark: "synth-v1".into(),
            seed: 0,
            scenes: 64,
            workers: 1,
            toggles: Toggles::ALL,
            scene: SceneConfig::default(),
            noise: NoiseConfig {
                label_flip: 0.05,
                offset_sigma: 0.2,
                mask_error: 0.0,
            },
            rv: RvSpec::default(),
            bev: BevSpec::default(),
            encoder: EncoderConfig::default(),
            cascade: CascadeConfig::default(),
            model: ModelConfig::default(),
            head: HeadConfig::default(),
            ablation_seeds: vec![0, 1, 2, 3, 4],
            out_dir: None,
            dump_heatmaps: false,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.scene.classes.len()
    }

    /// Ratio between the grid RV features are scattered onto and `bev`.
    pub fn refine_factor(&self) -> usize {
        1 << self.cascade.downsample_stages
    }

    /// Every problem with the configuration; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.scene.problems();
        out.extend(self.noise.problems());
        out.extend(self.encoder.problems());
        out.extend(self.cascade.problems());
        if self.scenes == 0 {
            out.push("scenes: must be at least 1".into());
        }
        if self.workers == 0 {
            out.push("workers: must be at least 1".into());
        }
        if self.scene.classes.is_empty() {
            out.push("scene.classes: at least one foreground class is required".into());
        }
        if let Err(e) = self.rv.validate() {
            out.push(format!("rv: {e}"));
        } else if !self.rv.height.is_multiple_of(4) || !self.rv.width.is_multiple_of(4) {
            out.push(format!(
                "rv: {}x{} must be divisible by 4 for the 1/2 and 1/4 scales",
                self.rv.height, self.rv.width
            ));
        }
        if let Err(e) = self.bev.validate() {
            out.push(format!("bev: {e}"));
        }
        let c = &self.cascade;
        let e = &self.encoder;
        for (name, got, want) in [
            ("cascade.r1_channels", c.r1_channels, e.r1_channels),
            ("cascade.r2_channels", c.r2_channels, e.r2_channels),
            ("cascade.r3_channels", c.r3_channels, e.r3_channels()),
            ("cascade.bev_channels", c.bev_channels, c.out_channels),
        ] {
            if got != want {
                out.push(format!(
                    "{name}: is {got} but the feeding stage produces {want}"
                ));
            }
        }
        if c.downsample_stages > 4 {
            out.push("cascade.downsample_stages: at most 4".into());
        }
        let m = &self.model;
        for (name, v) in [
            ("model.width", m.width),
            ("model.class_branch_channels", m.class_branch_channels),
            ("model.attention_ratio", m.attention_ratio),
        ] {
            if v == 0 {
                out.push(format!("{name}: must be positive"));
            }
        }
        let h = &self.head;
        if !(h.heatmap_sigma >= 0.0) || !h.heatmap_sigma.is_finite() {
            out.push(format!(
                "head.heatmap_sigma: must be non-negative, got {}",
                h.heatmap_sigma
            ));
        }
        if !(h.kappa > 0.0) || !h.kappa.is_finite() {
            out.push(format!("head.kappa: must be positive, got {}", h.kappa));
        }
        if !(h.ridge_lambda > 0.0) || !h.ridge_lambda.is_finite() {
            out.push(format!(
                "head.ridge_lambda: must be positive, got {}",
                h.ridge_lambda
            ));
        }
        if h.calibration_scenes == 0 {
            out.push("head.calibration_scenes: must be at least 1".into());
        }
        if h.k_max == 0 {
            out.push("head.k_max: must be at least 1".into());
        }
        if !(0.0..1.0).contains(&h.score_min) {
            out.push(format!(
                "head.score_min: must lie in [0, 1), got {}",
                h.score_min
            ));
        }
        if !(h.targets.min_overlap > 0.0 && h.targets.min_overlap < 1.0) {
            out.push(format!(
                "head.targets.min_overlap: must lie in (0, 1), got {}",
                h.targets.min_overlap
            ));
        }
        if self.dump_heatmaps && self.out_dir.is_none() {
            out.push("dump_heatmaps: requires out_dir".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Parses JSON without validating; missing keys take their defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = RunConfig::default();
        assert!(c.problems().is_empty(), "{:?}", c.problems());
        assert_eq!(RunConfig::from_json_str(&c.to_json_string()).unwrap(), c);
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), c);
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn every_problem_is_listed() {
        let mut c = RunConfig::default();
        c.scenes = 0;
        c.workers = 0;
        c.noise.offset_sigma = -1.0;
        c.head.kappa = 0.0;
        let p = c.problems();
        assert_eq!(p.len(), 4, "{p:?}");
        assert!(RunConfig::from_json_str(r#"{"scenez": 3}"#).is_err());
    }

    #[test]
    fn toggle_parsing() {
        assert_eq!(Toggles::parse("mba,cdh").unwrap().label(), "mba+cdh");
        assert_eq!(Toggles::parse("none").unwrap(), Toggles::default());
        assert!(Toggles::parse("mba,xyz").is_err());
    }
}
