use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};

use super::layers::{sincos_1d, sincos_2d, Block, Conv2d, LayerNorm};
use super::params::ParamStore;
use super::spec::EncoderSpec;
use crate::error::{Error, Result};

/// Patch-embedding vision transformer with fixed sine-cosine positional and
/// temporal embeddings. Parameter names follow the common timm layout.
#[derive(Debug, Clone)]
pub struct ToyVit {
    spec: EncoderSpec,
    patch_embed: Conv2d,
    blocks: Vec<Block>,
    norm: LayerNorm,
}

impl ToyVit {
    pub fn build(ps: &mut ParamStore, spec: &EncoderSpec, in_chans: usize) -> Result<Self> {
        spec.validate()?;
        let d = spec.embed_dim;
        let p = spec.patch_size;
        let patch_embed = ps.scoped("patch_embed", |ps| Conv2d::new(ps, "proj", in_chans, d, p, 0, p))?;
        let blocks = (0..spec.depth)
            .map(|i| Block::new(ps, &format!("blocks.{i}"), d, spec.heads, spec.mlp_ratio))
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(ps, "norm", d)?;
        Ok(Self {
            spec: spec.clone(),
            patch_embed,
            blocks,
            norm,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn embed_dim(&self) -> usize {
        self.spec.embed_dim
    }

    pub fn patch_size(&self) -> usize {
        self.spec.patch_size
    }

    pub fn grid(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.spec.tokens(h, w)?;
        Ok((h / self.spec.patch_size, w / self.spec.patch_size))
    }

    /// Patch tokens with positional and temporal embeddings, `(N, L, D)`.
    fn embed(&self, x: &Tensor, timestamp: f64) -> Result<(Tensor, (usize, usize))> {
        let (_, _, h, w) = x.dims4()?;
        let (gh, gw) = self.grid(h, w)?;
        let d = self.spec.embed_dim;
        let tokens = self.patch_embed.forward(x)?.flatten_from(2)?.transpose(1, 2)?;
        let mut pos = sincos_2d(d, gh, gw)?;
        if self.spec.temporal_embedding {
            let t = Tensor::from_vec(sincos_1d(d, &[timestamp]), (1, d), &Device::Cpu)?;
            pos = pos.broadcast_add(&t)?;
        }
        Ok((tokens.broadcast_add(&pos)?, (gh, gw)))
    }

    fn run_blocks(&self, mut x: Tensor) -> Result<Tensor> {
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        self.norm.forward(&x)
    }

    /// Encodes `(N, C, H, W)` into `(N, L, D)` tokens in row-major grid order.
    pub fn forward(&self, x: &Tensor, timestamp: f64) -> Result<(Tensor, (usize, usize))> {
        let (tokens, grid) = self.embed(x, timestamp)?;
        Ok((self.run_blocks(tokens)?, grid))
    }

    /// Encodes only the tokens listed in `ids_keep` (`(N, L_keep)`, u32).
    pub fn forward_visible(&self, x: &Tensor, ids_keep: &Tensor, timestamp: f64) -> Result<Tensor> {
        let (tokens, _) = self.embed(x, timestamp)?;
        let visible = gather_tokens(&tokens, ids_keep)?;
        self.run_blocks(visible)
    }
}

/// Selects `ids` (`(N, K)`, u32) along the token axis of `(N, L, D)`.
pub fn gather_tokens(tokens: &Tensor, ids: &Tensor) -> Result<Tensor> {
    let (n, _, d) = tokens.dims3()?;
    let k = ids.dim(1)?;
    let idx = ids.unsqueeze(2)?.broadcast_as((n, k, d))?.contiguous()?;
    Ok(tokens.contiguous()?.gather(&idx, 1)?)
}

/// Loads published encoder weights into `ps`.
///
/// Keys may carry an `encoder.` prefix. A five-dimensional patch-embedding
/// kernel `(D, C, T, p, p)` with `T = 1` is squeezed to `(D, C, p, p)`.
/// Tensors without a counterpart (positional tables, decoder weights) are
/// ignored; every encoder parameter must be present.
pub fn load_external_checkpoint(ps: &ParamStore, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("{} does not exist", path.display())));
    }
    let raw = candle_core::safetensors::load(path, &Device::Cpu)?;
    let mut mapped: HashMap<String, Tensor> = HashMap::with_capacity(raw.len());
    for (key, t) in raw {
        let key = key.strip_prefix("encoder.").unwrap_or(&key).to_string();
        let t = if key == "patch_embed.proj.weight" && t.rank() == 5 {
            if t.dim(2)? != 1 {
                return Err(Error::Checkpoint(format!(
                    "patch embedding spans {} frames; only single-frame weights are supported",
                    t.dim(2)?
                )));
            }
            t.squeeze(2)?
        } else {
            t
        };
        mapped.insert(key, t);
    }
    ps.assign(&mapped, |name| name.to_string())
}
