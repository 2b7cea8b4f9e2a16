use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{shape_err, Error, Result};
use crate::projection::{channel, rv_project, surface_normals, RangeImage, RvSpec};
use crate::tensor::{activation, conv2d, Activation, ConvParams, Tensor};

/// Corruption applied to ground truth when synthesizing a panoptic estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Probability a point's class is replaced by a uniformly drawn other class.
    pub label_flip: f64,
    /// Per-axis standard deviation of the center-offset error, meters.
    pub offset_sigma: f64,
    /// Probability a point's foreground-mask bit is inverted.
    pub mask_error: f64,
}

impl NoiseConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("label_flip", self.label_flip),
            ("mask_error", self.mask_error),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("noise.{name}: must lie in [0, 1], got {v}"));
            }
        }
        if !(self.offset_sigma >= 0.0) || !self.offset_sigma.is_finite() {
            out.push(format!(
                "noise.offset_sigma: must be non-negative, got {}",
                self.offset_sigma
            ));
        }
        out
    }
}

/// Widths and seed of the fixed, untrained RV encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Learned channels appended to the 6 geometric ones (normals, xyz) in r3.
    pub learned_channels: usize,
    pub r2_channels: usize,
    pub r1_channels: usize,
    /// Multiplier applied to raw xyz before encoding.
    pub coord_scale: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            learned_channels: 2,
            r2_channels: 16,
            r1_channels: 32,
            coord_scale: 1.0 / 25.6,
            seed: 0x00c0_ffee,
        }
    }
}

impl EncoderConfig {
    pub fn r3_channels(&self) -> usize {
        6 + self.learned_channels
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.r2_channels == 0 || self.r1_channels == 0 {
            out.push("encoder: r1/r2 channel counts must be positive".into());
        }
        if !(self.coord_scale > 0.0) || !self.coord_scale.is_finite() {
            out.push(format!(
                "encoder.coord_scale: must be positive, got {}",
                self.coord_scale
            ));
        }
        out
    }
}

/// Multi-scale RV feature maps at full, 1/2 and 1/4 resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RvFeatures {
    pub r1: Tensor,
    pub r2: Tensor,
    pub r3: Tensor,
}

/// Forward-only RV encoder with fixed-seed weights.
#[derive(Debug, Clone)]
pub struct RvEncoder {
    config: EncoderConfig,
    learned: Option<ConvParams>,
    down2: ConvParams,
    down1: ConvParams,
}

impl RvEncoder {
    pub fn new(config: EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let learned = (config.learned_channels > 0)
            .then(|| ConvParams::random(config.learned_channels, 6, 1, 1, true, &mut rng));
        let down2 = ConvParams::random(
            config.r2_channels,
            config.r3_channels(),
            3,
            3,
            true,
            &mut rng,
        )
        .with_stride(2)
        .with_padding(1);
        let down1 =
            ConvParams::random(config.r1_channels, config.r2_channels, 3, 3, true, &mut rng)
                .with_stride(2)
                .with_padding(1);
        Self {
            config,
            learned,
            down2,
            down1,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// `r3 = [normals | scaled xyz | relu(1x1(normals, xyz))]`, then two
    /// stride-2 3x3 conv + relu stages for `r2` and `r1`.
    pub fn encode(&self, img: &RangeImage) -> Result<RvFeatures> {
        let (h, w) = (img.spec.height, img.spec.width);
        if h % 4 != 0 || w % 4 != 0 {
            return shape_err(
                "RvEncoder::encode",
                format!("range image {h}x{w} must be divisible by 4"),
            );
        }
        let normals = surface_normals(img);
        let xyz = img
            .features
            .slice_channels(channel::X..channel::Z + 1)?
            .scale(self.config.coord_scale);
        let geo = Tensor::concat(&[&normals, &xyz])?;
        let r3 = match &self.learned {
            Some(p) => {
                let learned = activation(&conv2d(&geo, p)?, Activation::Relu);
                Tensor::concat(&[&geo, &learned])?
            }
            None => geo,
        };
        let r2 = activation(&conv2d(&r3, &self.down2)?, Activation::Relu);
        let r1 = activation(&conv2d(&r2, &self.down1)?, Activation::Relu);
        Ok(RvFeatures { r1, r2, r3 })
    }
}

/// Per-point panoptic outputs consumed by the detector.
#[derive(Debug, Clone)]
pub struct PanopticEstimate {
    pub num_classes: usize,
    /// Row-major `(point, K + 1)` class probabilities.
    pub class_probs: Vec<f64>,
    pub foreground_mask: Vec<bool>,
    /// Predicted vector from each point to its box center, meters.
    pub center_offsets: Vec<[f64; 3]>,
    pub range_image: RangeImage,
    pub rv_feats: RvFeatures,
}

impl PanopticEstimate {
    pub fn len(&self) -> usize {
        self.foreground_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.foreground_mask.is_empty()
    }

    pub fn probs(&self, point: usize) -> &[f64] {
        let k = self.num_classes + 1;
        &self.class_probs[point * k..(point + 1) * k]
    }

    pub fn argmax(&self, point: usize) -> usize {
        let p = self.probs(point);
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        best
    }
}

/// Synthesizes panoptic estimates from ground truth.
#[derive(Debug, Clone)]
pub struct PanopticOracle {
    pub rv: RvSpec,
    pub encoder: RvEncoder,
}

impl Default for PanopticOracle {
    fn default() -> Self {
        Self::new(RvSpec::default(), EncoderConfig::default())
    }
}

impl PanopticOracle {
    pub fn new(rv: RvSpec, encoder: EncoderConfig) -> Self {
        Self {
            rv,
            encoder: RvEncoder::new(encoder),
        }
    }

    /// With zero noise the class probabilities are one-hot on the true
    /// class, the mask equals ground truth, and every foreground offset
    /// points exactly at its box center.
    pub fn estimate(
        &self,
        scene: &Scene,
        noise: &NoiseConfig,
        seed: u64,
    ) -> Result<PanopticEstimate> {
        let problems = noise.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let k = scene.num_classes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offset_noise = (noise.offset_sigma > 0.0)
            .then(|| Normal::new(0.0, noise.offset_sigma).expect("validated sigma"));
        let n = scene.points.len();
        let mut class_probs = vec![0.0; n * (k + 1)];
        let mut foreground_mask = Vec::with_capacity(n);
        let mut center_offsets = Vec::with_capacity(n);
        for (i, (p, l)) in scene.points.iter().zip(&scene.labels).enumerate() {
            let truth = l.class_id as usize;
            let observed = if k > 0 && rng.random::<f64>() < noise.label_flip {
                let u = rng.random_range(0..k);
                if u >= truth {
                    u + 1
                } else {
                    u
                }
            } else {
                truth
            };
            class_probs[i * (k + 1) + observed] = 1.0;

            let mut fg = l.is_foreground();
            if rng.random::<f64>() < noise.mask_error {
                fg = !fg;
            }
            foreground_mask.push(fg);

            let offset = match scene.instance_box(l.instance_id) {
                Some(b) if l.is_foreground() => {
                    let mut o = [b.cx - p.x, b.cy - p.y, b.cz - p.z];
                    if let Some(dist) = &offset_noise {
                        o.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
                    }
                    o
                }
                _ => [0.0; 3],
            };
            center_offsets.push(offset);
        }
        let range_image = rv_project(&scene.points, &self.rv)?;
        let rv_feats = self.encoder.encode(&range_image)?;
        Ok(PanopticEstimate {
            num_classes: k,
            class_probs,
            foreground_mask,
            center_offsets,
            range_image,
            rv_feats,
        })
    }
}

/// [`PanopticOracle::estimate`] with the default RV geometry and encoder.
pub fn oracle_panoptic(scene: &Scene, noise: &NoiseConfig, seed: u64) -> Result<PanopticEstimate> {
    PanopticOracle::default().estimate(scene, noise, seed)
}
