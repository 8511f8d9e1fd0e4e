use candle_core::Tensor;

use super::layers::{Conv2d, UpConv};
use super::params::ParamStore;
use super::spec::DecoderSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Stage {
    up: UpConv,
    conv: Conv2d,
}

/// Token grid to per-pixel logits: `stages` x (2x transposed conv, ReLU,
/// 3x3 conv, ReLU), then a 1x1 classifier.
#[derive(Debug, Clone)]
pub struct Decoder {
    stages: Vec<Stage>,
    head: Conv2d,
}

impl Decoder {
    pub fn build(ps: &mut ParamStore, spec: &DecoderSpec, embed_dim: usize, patch: usize) -> Result<Self> {
        spec.validate(patch)?;
        let mut c_in = embed_dim;
        let mut stages = Vec::with_capacity(spec.stages);
        for (i, w) in spec.stage_widths(embed_dim).into_iter().enumerate() {
            let stage = ps.scoped(&format!("stages.{i}"), |ps| {
                Ok(Stage {
                    up: UpConv::new(ps, "up", c_in, w)?,
                    conv: Conv2d::new(ps, "conv", w, w, 3, 1, 1)?,
                })
            })?;
            stages.push(stage);
            c_in = w;
        }
        let head = Conv2d::new(ps, "head", c_in, spec.classes, 1, 0, 1)?;
        Ok(Self { stages, head })
    }

    /// `(N, L, D)` tokens on a square `g x g` grid to `(N, 2, g*2^s, g*2^s)`.
    pub fn forward(&self, tokens: &Tensor, grid: (usize, usize)) -> Result<Tensor> {
        let (n, l, d) = tokens.dims3()?;
        let (gh, gw) = grid;
        if gh != gw || gh * gw != l {
            return Err(Error::Shape(format!("{l} tokens do not form a square {gh}x{gw} grid")));
        }
        let mut x = tokens.transpose(1, 2)?.reshape((n, d, gh, gw))?;
        for stage in &self.stages {
            x = stage.up.forward(&x)?.relu()?;
            x = stage.conv.forward(&x)?.relu()?;
        }
        self.head.forward(&x)
    }
}
