//! Masked-autoencoder pretraining for the toy encoder.

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::Rng;

use super::layers::{sincos_2d, Block, LayerNorm, Linear};
use super::params::ParamStore;
use super::spec::EncoderSpec;
use super::vit::{gather_tokens, ToyVit};
use crate::error::{Error, Result};

/// Reconstruction-decoder size: width, depth, heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReconSpec {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
}

impl Default for ReconSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            depth: 2,
            heads: 4,
        }
    }
}

/// Tokens masked for a given ratio: `ceil(ratio * tokens)`.
pub fn mask_count(ratio: f64, tokens: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::MaskRatio(ratio));
    }
    let masked = ((ratio * tokens as f64) - 1e-9).ceil().max(1.0) as usize;
    if masked >= tokens {
        return Err(Error::MaskRatio(ratio));
    }
    Ok(masked)
}

/// Per-sample random token split.
#[derive(Debug, Clone)]
pub struct Masking {
    /// Visible token indices `(N, L_keep)`.
    pub ids_keep: Tensor,
    /// Inverse of the shuffle `(N, L)`.
    pub ids_restore: Tensor,
    /// 1 for masked tokens, `(N, L)`.
    pub mask: Tensor,
}

pub fn random_masking<R: Rng + ?Sized>(n: usize, tokens: usize, ratio: f64, rng: &mut R) -> Result<Masking> {
    let masked = mask_count(ratio, tokens)?;
    let keep = tokens - masked;
    let mut ids_keep = Vec::with_capacity(n * keep);
    let mut ids_restore = vec![0u32; n * tokens];
    let mut mask = vec![1f32; n * tokens];
    for s in 0..n {
        let mut order: Vec<u32> = (0..tokens as u32).collect();
        for i in (1..tokens).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for (rank, &t) in order.iter().enumerate() {
            ids_restore[s * tokens + t as usize] = rank as u32;
        }
        for &t in &order[..keep] {
            mask[s * tokens + t as usize] = 0.0;
        }
        ids_keep.extend_from_slice(&order[..keep]);
    }
    let dev = Device::Cpu;
    Ok(Masking {
        ids_keep: Tensor::from_vec(ids_keep, (n, keep), &dev)?,
        ids_restore: Tensor::from_vec(ids_restore, (n, tokens), &dev)?,
        mask: Tensor::from_vec(mask, (n, tokens), &dev)?,
    })
}

/// `(N, C, H, W)` to `(N, L, p*p*C)` in row-major token order.
pub fn patchify(x: &Tensor, p: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if h % p != 0 || w % p != 0 {
        return Err(Error::PatchGrid {
            height: h,
            width: w,
            patch: p,
        });
    }
    let (gh, gw) = (h / p, w / p);
    Ok(x.reshape((n, c, gh, p, gw, p))?
        .permute((0, 2, 4, 3, 5, 1))?
        .reshape((n, gh * gw, p * p * c))?)
}

/// Mean squared error over masked tokens only, normalised by their count.
pub fn mae_loss(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let per_token = (pred - target)?.sqr()?.mean(2)?;
    let masked = mask.sum_all()?;
    Ok((per_token * mask)?.sum_all()?.div(&masked)?)
}

#[derive(Debug, Clone)]
pub struct ReconDecoder {
    embed: Linear,
    mask_token: Tensor,
    blocks: Vec<Block>,
    norm: LayerNorm,
    pred: Linear,
    dim: usize,
}

impl ReconDecoder {
    pub fn build(ps: &mut ParamStore, spec: ReconSpec, embed_dim: usize, patch: usize, chans: usize) -> Result<Self> {
        Ok(Self {
            embed: Linear::new(ps, "decoder_embed", embed_dim, spec.dim)?,
            mask_token: ps.normal("mask_token", &[1, 1, spec.dim], 0.02)?,
            blocks: (0..spec.depth)
                .map(|i| Block::new(ps, &format!("decoder_blocks.{i}"), spec.dim, spec.heads, 4))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(ps, "decoder_norm", spec.dim)?,
            pred: Linear::new(ps, "decoder_pred", spec.dim, patch * patch * chans)?,
            dim: spec.dim,
        })
    }

    /// Visible latents `(N, L_keep, D)` to per-token pixel predictions
    /// `(N, L, p*p*C)`.
    pub fn forward(&self, latent: &Tensor, ids_restore: &Tensor, grid: (usize, usize)) -> Result<Tensor> {
        let (n, keep, _) = latent.dims3()?;
        let tokens = ids_restore.dim(1)?;
        let x = self.embed.forward(latent)?;
        let fill = self.mask_token.broadcast_as((n, tokens - keep, self.dim))?;
        let x = Tensor::cat(&[&x, &fill], 1)?;
        let x = gather_tokens(&x, ids_restore)?;
        let mut x = x.broadcast_add(&sincos_2d(self.dim, grid.0, grid.1)?)?;
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        self.pred.forward(&self.norm.forward(&x)?)
    }
}

#[derive(Debug, Clone)]
pub struct MaeOutput {
    pub pred: Tensor,
    pub target: Tensor,
    pub mask: Tensor,
}

/// Encoder, reconstruction decoder and their optimizer.
pub struct MaePretrainer {
    encoder: ToyVit,
    decoder: ReconDecoder,
    encoder_params: ParamStore,
    decoder_params: ParamStore,
    optimizer: AdamW,
    chans: usize,
}

impl MaePretrainer {
    pub fn new(spec: &EncoderSpec, chans: usize, seed: u64, lr: f64) -> Result<Self> {
        Self::with_decoder(spec, ReconSpec::default(), chans, seed, lr)
    }

    pub fn with_decoder(spec: &EncoderSpec, recon: ReconSpec, chans: usize, seed: u64, lr: f64) -> Result<Self> {
        let mut encoder_params = ParamStore::new(seed ^ 0xe4c0_de40);
        let mut decoder_params = ParamStore::new(seed ^ 0x4ec0_de40);
        let encoder = ToyVit::build(&mut encoder_params, spec, chans)?;
        let decoder = ReconDecoder::build(
            &mut decoder_params,
            recon,
            spec.embed_dim,
            spec.patch_size,
            chans,
        )?;
        let mut vars = encoder_params.vars();
        vars.extend(decoder_params.vars());
        let optimizer = AdamW::new(
            vars,
            ParamsAdamW {
                lr,
                weight_decay: 0.0,
                ..Default::default()
            },
        )?;
        Ok(Self {
            encoder,
            decoder,
            encoder_params,
            decoder_params,
            optimizer,
            chans,
        })
    }

    pub fn encoder_params(&self) -> &ParamStore {
        &self.encoder_params
    }

    pub fn decoder_params(&self) -> &ParamStore {
        &self.decoder_params
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.optimizer.set_learning_rate(lr);
    }

    /// Reconstruction of `x` (`(N, C, H, W)`) under a fresh random mask.
    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, ratio: f64, rng: &mut R) -> Result<MaeOutput> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.chans {
            return Err(Error::ChannelCount {
                expected: self.chans,
                actual: c,
            });
        }
        let grid = self.encoder.grid(h, w)?;
        let masking = random_masking(n, grid.0 * grid.1, ratio, rng)?;
        let latent = self.encoder.forward_visible(x, &masking.ids_keep, 1.0)?;
        let pred = self.decoder.forward(&latent, &masking.ids_restore, grid)?;
        Ok(MaeOutput {
            pred,
            target: patchify(x, self.encoder.patch_size())?,
            mask: masking.mask,
        })
    }

    /// One optimizer step; returns the masked reconstruction loss.
    pub fn step<R: Rng + ?Sized>(&mut self, x: &Tensor, ratio: f64, rng: &mut R) -> Result<f32> {
        let out = self.forward(x, ratio, rng)?;
        let loss = mae_loss(&out.pred, &out.target, &out.mask)?;
        self.optimizer.backward_step(&loss)?;
        Ok(loss.to_dtype(DType::F32)?.to_scalar::<f32>()?)
    }
}

/// One masked-reconstruction training step.
pub fn mae_pretrain_step<R: Rng + ?Sized>(
    pretrainer: &mut MaePretrainer,
    x: &Tensor,
    mask_ratio: f64,
    rng: &mut R,
) -> Result<f32> {
    pretrainer.step(x, mask_ratio, rng)
}
