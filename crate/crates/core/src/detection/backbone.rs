use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::{activation, conv2d, Activation, ConvParams, Tensor};

/// Three same-resolution 3x3 conv + relu layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBackbone {
    pub layers: Vec<ConvParams>,
}

impl MiniBackbone {
    pub fn random(in_ch: usize, width: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let layers = (0..3)
            .map(|i| {
                let c_in = if i == 0 { in_ch } else { width };
                ConvParams::random(width, c_in, 3, 3, bias, rng).same()
            })
            .collect();
        Self { layers }
    }

    pub fn in_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_ch)
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_ch)
    }
}

pub fn mini_backbone(bev_in: &Tensor, params: &MiniBackbone) -> Result<Tensor> {
    let mut x = bev_in.clone();
    for layer in &params.layers {
        let y = conv2d(&x, layer)?;
        if (y.height(), y.width()) != (x.height(), x.width()) {
            return shape_err("mini_backbone", "layer does not preserve resolution");
        }
        x = activation(&y, Activation::Relu);
    }
    Ok(x)
}
