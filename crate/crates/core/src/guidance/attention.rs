use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::{
    conv2d, mlp, pool_channel, pool_spatial, Activation, ConvParams, MlpParams, PoolMode, Tensor,
};

/// Parameters of the attention-based RV-BEV feature weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct RvBevAttnParams {
    /// Shared over the four pooled vectors; `C_total -> C_total`.
    pub channel_mlp: MlpParams,
    /// 4-in 1-out 3x3 conv, dilation 3, same padding.
    pub spatial_conv: ConvParams,
    /// 1x1 compression from `C_total` to the backbone width.
    pub output: ConvParams,
}

impl RvBevAttnParams {
    pub fn spatial_conv_zeros() -> ConvParams {
        ConvParams::zeros(1, 4, 3, 3).with_dilation(3).same()
    }

    pub fn random(
        bev_channels: usize,
        rv_channels: usize,
        out_channels: usize,
        ratio: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let total = bev_channels + rv_channels;
        let hidden = (total / ratio.max(1)).max(1);
        Self {
            channel_mlp: MlpParams::random(total, hidden, total, rng),
            spatial_conv: ConvParams::random(1, 4, 3, 3, true, rng)
                .with_dilation(3)
                .same(),
            output: ConvParams::random(out_channels, total, 1, 1, true, rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RvBevTrace {
    /// `(C_total, H, W)` attention in `(0, 1)`.
    pub attention: Tensor,
    /// `attention * concat(bev, rv)`, before compression.
    pub weighted: Tensor,
    pub output: Tensor,
}

/// Zero vector of length `total` with `v` written at `offset`.
fn embed(v: &[f64], offset: usize, total: usize) -> Vec<f64> {
    let mut out = vec![0.0; total];
    out[offset..offset + v.len()].copy_from_slice(v);
    out
}

pub fn rv_bev_attention_traced(
    bev: &Tensor,
    rv_in_bev: &Tensor,
    p: &RvBevAttnParams,
) -> Result<RvBevTrace> {
    if (bev.height(), bev.width()) != (rv_in_bev.height(), rv_in_bev.width()) {
        return shape_err(
            "rv_bev_attention",
            format!("BEV {:?} vs RV-in-BEV {:?}", bev.shape(), rv_in_bev.shape()),
        );
    }
    let cb = bev.channels();
    let total = cb + rv_in_bev.channels();
    if p.channel_mlp.input != total || p.channel_mlp.output != total {
        return shape_err(
            "rv_bev_attention",
            format!(
                "channel MLP {} -> {} for {total} concatenated channels",
                p.channel_mlp.input, p.channel_mlp.output
            ),
        );
    }
    if p.spatial_conv.in_ch != 4 || p.spatial_conv.out_ch != 1 {
        return shape_err("rv_bev_attention", "spatial conv must map 4 channels to 1");
    }

    // Channel stream: each view's pooled vector sits at that view's offset in
    // the concatenated layout; the shared MLP outputs are summed.
    let mut channel = vec![0.0; total];
    for (view, offset) in [(bev, 0), (rv_in_bev, cb)] {
        for mode in [PoolMode::Max, PoolMode::Avg] {
            let v = embed(&pool_spatial(view, mode)?, offset, total);
            for (acc, o) in channel.iter_mut().zip(mlp(&v, &p.channel_mlp)?) {
                *acc += o;
            }
        }
    }

    let maps = Tensor::concat(&[
        &pool_channel(bev, PoolMode::Max)?,
        &pool_channel(bev, PoolMode::Avg)?,
        &pool_channel(rv_in_bev, PoolMode::Max)?,
        &pool_channel(rv_in_bev, PoolMode::Avg)?,
    ])?;
    let spatial = conv2d(&maps, &p.spatial_conv)?;
    if (spatial.height(), spatial.width()) != (bev.height(), bev.width()) {
        return shape_err("rv_bev_attention", "spatial conv does not preserve size");
    }

    let (h, w) = (bev.height(), bev.width());
    let attention = Tensor::from_fn(total, h, w, |c, y, x| {
        Activation::Sigmoid.eval(channel[c] + spatial.get(0, y, x))
    });
    let weighted = Tensor::concat(&[bev, rv_in_bev])?.mul(&attention)?;
    let output = conv2d(&weighted, &p.output)?;
    Ok(RvBevTrace {
        attention,
        weighted,
        output,
    })
}

/// Weights `concat(bev, rv_in_bev)` by a joint channel/spatial attention
/// and compresses the result to the backbone width.
pub fn rv_bev_attention(bev: &Tensor, rv_in_bev: &Tensor, p: &RvBevAttnParams) -> Result<Tensor> {
    Ok(rv_bev_attention_traced(bev, rv_in_bev, p)?.output)
}

/// Bias-free 1x1 convs of class-wise foreground attention.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAttnParams {
    /// One `C -> C_branch` conv per foreground class.
    pub branch: Vec<ConvParams>,
    /// `K * C_branch -> C` merge conv.
    pub merge: ConvParams,
}

impl ClassAttnParams {
    pub fn random(
        channels: usize,
        branch_channels: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            branch: (0..classes)
                .map(|_| ConvParams::random(branch_channels, channels, 1, 1, false, rng))
                .collect(),
            merge: ConvParams::random(channels, classes * branch_channels, 1, 1, false, rng),
        }
    }
}

/// `x + merge(concat_k branch_k(x * prob_k))`.
///
/// All convs are bias-free, so all-zero probability maps return `x` exactly.
pub fn class_foreground_attention(
    x: &Tensor,
    probs_bev: &[Tensor],
    p: &ClassAttnParams,
) -> Result<Tensor> {
    const OP: &str = "class_foreground_attention";
    if probs_bev.len() != p.branch.len() {
        return shape_err(
            OP,
            format!(
                "{} probability maps for {} branches",
                probs_bev.len(),
                p.branch.len()
            ),
        );
    }
    if probs_bev.is_empty() {
        return shape_err(OP, "no foreground classes");
    }
    if p.branch.iter().any(|b| b.bias.is_some()) || p.merge.bias.is_some() {
        return shape_err(OP, "convs must be bias-free");
    }
    let mut branches = Vec::with_capacity(probs_bev.len());
    for (prob, conv) in probs_bev.iter().zip(&p.branch) {
        branches.push(conv2d(&x.mul_plane(prob)?, conv)?);
    }
    let merged = conv2d(
        &Tensor::concat(&branches.iter().collect::<Vec<_>>())?,
        &p.merge,
    )?;
    if merged.shape() != x.shape() {
        return shape_err(
            OP,
            format!(
                "merge produces {:?} for input {:?}",
                merged.shape(),
                x.shape()
            ),
        );
    }
    x.add(&merged)
}
