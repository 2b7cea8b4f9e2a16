//! Multi-view backbone augmentation: CBAM, cascade RV feature fusion, and
//! the BEV down-sampling chain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::{
    activation, conv2d, conv_transpose2d_x2, mlp, pool_channel, pool_spatial, space2depth,
    Activation, ConvParams, MlpParams, PoolMode, Tensor,
};

/// Channel MLP shared by the max- and avg-pooled vectors, and a `k x k`
/// 2-in 1-out spatial conv with same padding.
#[derive(Debug, Clone, PartialEq)]
pub struct CbamParams {
    pub channel_mlp: MlpParams,
    pub spatial_conv: ConvParams,
}

impl CbamParams {
    pub fn hidden_width(channels: usize, ratio: usize) -> usize {
        (channels / ratio.max(1)).max(1)
    }

    pub fn zeros(channels: usize, ratio: usize, kernel: usize) -> Self {
        Self {
            channel_mlp: MlpParams::zeros(channels, Self::hidden_width(channels, ratio), channels),
            spatial_conv: ConvParams::zeros(1, 2, kernel, kernel).same(),
        }
    }

    pub fn random(channels: usize, ratio: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let hidden = Self::hidden_width(channels, ratio);
        Self {
            channel_mlp: MlpParams::random(channels, hidden, channels, rng),
            spatial_conv: ConvParams::random(1, 2, kernel, kernel, true, rng).same(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channel_mlp.input
    }
}

/// Output of [`cbam_traced`]: the refined tensor and both attention factors.
#[derive(Debug, Clone)]
pub struct CbamTrace {
    pub output: Tensor,
    pub channel_attention: Vec<f64>,
    pub spatial_attention: Tensor,
}

pub fn cbam_traced(x: &Tensor, p: &CbamParams) -> Result<CbamTrace> {
    let c = x.channels();
    if p.channel_mlp.input != c || p.channel_mlp.output != c {
        return shape_err(
            "cbam",
            format!(
                "channel MLP {} -> {} for a {c}-channel input",
                p.channel_mlp.input, p.channel_mlp.output
            ),
        );
    }
    if p.spatial_conv.in_ch != 2 || p.spatial_conv.out_ch != 1 {
        return shape_err("cbam", "spatial conv must map 2 channels to 1");
    }
    let m = mlp(&pool_spatial(x, PoolMode::Max)?, &p.channel_mlp)?;
    let a = mlp(&pool_spatial(x, PoolMode::Avg)?, &p.channel_mlp)?;
    let channel_attention: Vec<f64> = m
        .iter()
        .zip(&a)
        .map(|(u, v)| Activation::Sigmoid.eval(u + v))
        .collect();
    let refined = x.mul_channels(&channel_attention)?;

    let pooled = Tensor::concat(&[
        &pool_channel(&refined, PoolMode::Max)?,
        &pool_channel(&refined, PoolMode::Avg)?,
    ])?;
    let logits = conv2d(&pooled, &p.spatial_conv)?;
    if (logits.height(), logits.width()) != (x.height(), x.width()) {
        return shape_err("cbam", "spatial conv does not preserve size");
    }
    let spatial_attention = activation(&logits, Activation::Sigmoid);
    let output = refined.mul_plane(&spatial_attention)?;
    Ok(CbamTrace {
        output,
        channel_attention,
        spatial_attention,
    })
}

/// Channel then spatial attention. Both factors lie in `(0, 1)`, so
/// `|cbam(x)| <= |x|` elementwise.
pub fn cbam(x: &Tensor, p: &CbamParams) -> Result<Tensor> {
    Ok(cbam_traced(x, p)?.output)
}

/// `x + conv(x)` with a size-preserving 3x3 conv.
pub fn boundary_refine(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    if p.in_ch != p.out_ch {
        return shape_err(
            "boundary_refine",
            format!("conv maps {} channels to {}", p.in_ch, p.out_ch),
        );
    }
    let y = conv2d(x, p)?;
    if y.shape() != x.shape() {
        return shape_err("boundary_refine", "conv does not preserve size");
    }
    x.add(&y)
}

/// Widths of the cascade fusion module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub r1_channels: usize,
    pub r2_channels: usize,
    pub r3_channels: usize,
    /// Channels produced by the two up-sampling stages.
    pub up_channels: [usize; 2],
    pub out_channels: usize,
    pub cbam_ratio: usize,
    pub cbam_kernel: usize,
    /// Channel count entering the BEV down-sampling chain.
    pub bev_channels: usize,
    pub downsample_stages: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            r1_channels: 32,
            r2_channels: 16,
            r3_channels: 8,
            up_channels: [16, 8],
            out_channels: 16,
            cbam_ratio: 4,
            cbam_kernel: 7,
            bev_channels: 16,
            downsample_stages: 1,
        }
    }
}

impl CascadeConfig {
    /// Channel count of the CBAM input at each of the three scales.
    pub fn cbam_widths(&self) -> [usize; 3] {
        [
            self.r1_channels,
            self.up_channels[0] + self.r2_channels,
            self.up_channels[1] + self.r3_channels,
        ]
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let widths = [
            ("r1_channels", self.r1_channels),
            ("r2_channels", self.r2_channels),
            ("r3_channels", self.r3_channels),
            ("up_channels[0]", self.up_channels[0]),
            ("up_channels[1]", self.up_channels[1]),
            ("out_channels", self.out_channels),
            ("cbam_ratio", self.cbam_ratio),
            ("bev_channels", self.bev_channels),
        ];
        for (name, v) in widths {
            if v == 0 {
                out.push(format!("cascade.{name}: must be positive"));
            }
        }
        if self.cbam_kernel.is_multiple_of(2) {
            out.push(format!(
                "cascade.cbam_kernel: must be odd, got {}",
                self.cbam_kernel
            ));
        }
        out
    }

    /// Channel count leaving the down-sampling chain.
    pub fn bev_out_channels(&self) -> usize {
        self.bev_channels << self.downsample_stages
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    /// CBAM at 1/4, 1/2 and full resolution.
    pub cbam: [CbamParams; 3],
    /// Transposed 3x3 stride-2 convs for the 1/4 -> 1/2 and 1/2 -> 1 steps.
    pub upsample: [ConvParams; 2],
    pub refine: [ConvParams; 2],
    /// Final linear 1x1 conv at full resolution.
    pub output: ConvParams,
    /// Bias-free 1x1 convs, one per space2depth stage, each `4C -> 2C`.
    pub downsample: Vec<ConvParams>,
}

impl CascadeParams {
    /// Glorot weights. Conv biases are drawn only when `bias` is set.
    pub fn random(cfg: &CascadeConfig, bias: bool, rng: &mut impl Rng) -> Self {
        let [w1, w2, w3] = cfg.cbam_widths();
        let cbam = [
            CbamParams::random(w1, cfg.cbam_ratio, cfg.cbam_kernel, rng),
            CbamParams::random(w2, cfg.cbam_ratio, cfg.cbam_kernel, rng),
            CbamParams::random(w3, cfg.cbam_ratio, cfg.cbam_kernel, rng),
        ];
        let up = |o, i, rng: &mut _| {
            ConvParams::random(o, i, 3, 3, bias, rng)
                .with_stride(2)
                .with_padding(1)
        };
        let upsample = [
            up(cfg.up_channels[0], w1, rng),
            up(cfg.up_channels[1], w2, rng),
        ];
        let refine = [
            ConvParams::random(cfg.up_channels[0], cfg.up_channels[0], 3, 3, bias, rng).same(),
            ConvParams::random(cfg.up_channels[1], cfg.up_channels[1], 3, 3, bias, rng).same(),
        ];
        let output = ConvParams::random(cfg.out_channels, w3, 1, 1, bias, rng);
        let downsample = (0..cfg.downsample_stages)
            .map(|s| {
                let c = cfg.bev_channels << s;
                ConvParams::random(2 * c, 4 * c, 1, 1, false, rng)
            })
            .collect();
        Self {
            cbam,
            upsample,
            refine,
            output,
            downsample,
        }
    }
}

/// Coarse-to-fine fusion of `r1` (1/4), `r2` (1/2) and `r3` (full):
///
/// ```text
/// cbam(r1) -> up x2 -> relu -> refine -> [.., r2] -> cbam
///          -> up x2 -> relu -> refine -> [.., r3] -> cbam -> 1x1
/// ```
pub fn cascade_fuse(r1: &Tensor, r2: &Tensor, r3: &Tensor, p: &CascadeParams) -> Result<Tensor> {
    let (h, w) = (r3.height(), r3.width());
    if (r2.height() * 2, r2.width() * 2) != (h, w) || (r1.height() * 4, r1.width() * 4) != (h, w) {
        return shape_err(
            "cascade_fuse",
            format!(
                "scales {:?}, {:?}, {:?} are not 1/4, 1/2, 1 of each other",
                r1.shape(),
                r2.shape(),
                r3.shape()
            ),
        );
    }
    let mut x = cbam(r1, &p.cbam[0])?;
    for (stage, skip) in [r2, r3].into_iter().enumerate() {
        let up = activation(
            &conv_transpose2d_x2(&x, &p.upsample[stage])?,
            Activation::Relu,
        );
        let refined = boundary_refine(&up, &p.refine[stage])?;
        x = cbam(&Tensor::concat(&[&refined, skip])?, &p.cbam[stage + 1])?;
    }
    conv2d(&x, &p.output)
}

/// Halves resolution and doubles channels once per stage via
/// `space2depth` followed by a 1x1 conv.
pub fn bev_downsample_chain(x: &Tensor, p: &CascadeParams) -> Result<Tensor> {
    let stages = p.downsample.len();
    let div = 1usize << stages;
    if !x.height().is_multiple_of(div) || !x.width().is_multiple_of(div) {
        return shape_err(
            "bev_downsample_chain",
            format!(
                "{}x{} is not divisible by 2^{stages}",
                x.height(),
                x.width()
            ),
        );
    }
    let mut y = x.clone();
    for conv in &p.downsample {
        y = conv2d(&space2depth(&y)?, conv)?;
    }
    Ok(y)
}
