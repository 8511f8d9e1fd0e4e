use candle_core::Tensor;

use super::layers::Conv2d;
use super::params::ParamStore;
use super::spec::{AdapterKind, AdapterSpec};
use crate::datasets::HLS_SIX;
use crate::error::{Error, Result};

/// Maps `B_in` input channels onto the encoder's channel interface.
#[derive(Debug, Clone)]
pub enum Adapter {
    Identity {
        channels: usize,
    },
    /// Per-pixel affine map `x W + b` with `W` stored `(B_in, B_pre)`.
    Linear {
        weight: Tensor,
        bias: Tensor,
    },
    ConvHead {
        convs: Vec<Conv2d>,
        proj: Conv2d,
    },
}

/// Initial linear weights: column `j` copies the input band named like the
/// `j`-th pretraining band when present, otherwise small noise.
pub fn linear_init(ps: &mut ParamStore, bands: &[String], b_pre: usize) -> Vec<f32> {
    let b_in = bands.len();
    let mut w = vec![0.0f32; b_in * b_pre];
    for j in 0..b_pre {
        let matched = HLS_SIX
            .get(j)
            .and_then(|name| bands.iter().position(|b| b == name));
        match matched {
            Some(i) => w[i * b_pre + j] = 1.0,
            None => {
                let noise = ps.normal_values(b_in, 0.01);
                for (i, v) in noise.into_iter().enumerate() {
                    w[i * b_pre + j] = v;
                }
            }
        }
    }
    w
}

impl Adapter {
    pub fn build(ps: &mut ParamStore, spec: &AdapterSpec, bands: &[String]) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            AdapterKind::None => Ok(Adapter::Identity { channels: spec.b_in }),
            AdapterKind::Linear => {
                let w = linear_init(ps, bands, spec.b_pre);
                Ok(Adapter::Linear {
                    weight: ps.from_vec("weight", w, &[spec.b_in, spec.b_pre])?,
                    bias: ps.zeros("bias", &[spec.b_pre])?,
                })
            }
            AdapterKind::ConvHead => {
                let mut convs = Vec::with_capacity(spec.depth);
                let mut c_in = spec.b_in;
                for i in 0..spec.depth {
                    convs.push(Conv2d::new(ps, &format!("convs.{i}"), c_in, spec.width, 3, 1, 1)?);
                    c_in = spec.width;
                }
                let proj = Conv2d::new(ps, "proj", c_in, spec.b_pre, 1, 0, 1)?;
                Ok(Adapter::ConvHead { convs, proj })
            }
        }
    }

    pub fn in_channels(&self) -> Result<usize> {
        Ok(match self {
            Adapter::Identity { channels } => *channels,
            Adapter::Linear { weight, .. } => weight.dim(0)?,
            Adapter::ConvHead { convs, .. } => convs[0].in_channels()?,
        })
    }

    /// `(N, B_in, H, W)` to `(N, B_pre, H, W)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = x.dim(1)?;
        let expected = self.in_channels()?;
        if c != expected {
            return Err(Error::ChannelCount { expected, actual: c });
        }
        match self {
            Adapter::Identity { .. } => Ok(x.clone()),
            Adapter::Linear { weight, bias } => {
                let (b_in, b_pre) = weight.dims2()?;
                let kernel = weight.t()?.reshape((b_pre, b_in, 1, 1))?;
                let y = x.conv2d(&kernel, 0, 1, 1, 1)?;
                Ok(y.broadcast_add(&bias.reshape((1, b_pre, 1, 1))?)?)
            }
            Adapter::ConvHead { convs, proj } => {
                let mut h = x.clone();
                for conv in convs {
                    h = conv.forward(&h)?.relu()?;
                }
                proj.forward(&h)
            }
        }
    }
}
