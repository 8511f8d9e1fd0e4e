use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel count of the pretrained encoder interface.
pub const B_PRE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    None,
    Linear,
    #[serde(alias = "conv")]
    ConvHead,
}

impl AdapterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterKind::None => "none",
            AdapterKind::Linear => "linear",
            AdapterKind::ConvHead => "conv",
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdapterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AdapterKind::None),
            "linear" => Ok(AdapterKind::Linear),
            "conv" | "conv_head" => Ok(AdapterKind::ConvHead),
            other => Err(Error::Config(format!("unknown adapter `{other}`"))),
        }
    }
}

fn default_b_pre() -> usize {
    B_PRE
}

fn default_adapter_width() -> usize {
    32
}

fn default_adapter_depth() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub kind: AdapterKind,
    pub b_in: usize,
    #[serde(default = "default_b_pre")]
    pub b_pre: usize,
    /// Hidden width of the convolutional head.
    #[serde(default = "default_adapter_width")]
    pub width: usize,
    /// Number of 3x3 convolutions in the convolutional head.
    #[serde(default = "default_adapter_depth")]
    pub depth: usize,
}

impl AdapterSpec {
    pub fn new(kind: AdapterKind, b_in: usize) -> Self {
        Self {
            kind,
            b_in,
            b_pre: B_PRE,
            width: default_adapter_width(),
            depth: default_adapter_depth(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_in == 0 {
            return Err(Error::ChannelCount {
                expected: 1,
                actual: 0,
            });
        }
        if self.kind == AdapterKind::None && self.b_in != self.b_pre {
            return Err(Error::AdapterBypass(self.b_in));
        }
        if self.kind == AdapterKind::ConvHead && (self.depth == 0 || self.width == 0) {
            return Err(Error::Config("convolutional adapter needs depth and width >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningStrategy {
    Frozen,
    Full,
}

impl TuningStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            TuningStrategy::Frozen => "frozen",
            TuningStrategy::Full => "full",
        }
    }
}

impl fmt::Display for TuningStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TuningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(TuningStrategy::Frozen),
            "full" => Ok(TuningStrategy::Full),
            other => Err(Error::Config(format!("unknown tuning strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    ToyVit,
    ExternalCheckpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Weights file for `external_checkpoint`.
    pub checkpoint: Option<PathBuf>,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Time steps per sample; fine-tuning uses a single step.
    pub frames: usize,
    pub temporal_embedding: bool,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            kind: EncoderKind::ToyVit,
            checkpoint: None,
            patch_size: 16,
            embed_dim: 64,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            frames: 1,
            temporal_embedding: true,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.embed_dim == 0 || self.heads == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if !self.embed_dim.is_multiple_of(self.heads) || !self.embed_dim.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "embed_dim {} must be divisible by 4 and by the head count {}",
                self.embed_dim, self.heads
            )));
        }
        if self.frames != 1 {
            return Err(Error::Config("only single-frame inputs are supported".into()));
        }
        if self.kind == EncoderKind::ExternalCheckpoint && self.checkpoint.is_none() {
            return Err(Error::Config("external_checkpoint encoder needs a checkpoint path".into()));
        }
        Ok(())
    }

    /// Tokens produced for an `h x w` input.
    pub fn tokens(&self, h: usize, w: usize) -> Result<usize> {
        let p = self.patch_size;
        if !h.is_multiple_of(p) || !w.is_multiple_of(p) {
            return Err(Error::PatchGrid {
                height: h,
                width: w,
                patch: p,
            });
        }
        Ok((h / p) * (w / p) * self.frames)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderSpec {
    pub stages: usize,
    /// Output width of each stage; empty means halve from the embedding
    /// width at every stage.
    pub widths: Vec<usize>,
    pub classes: usize,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        Self {
            stages: 4,
            widths: Vec::new(),
            classes: 2,
        }
    }
}

impl DecoderSpec {
    pub fn for_patch(patch: usize) -> Self {
        Self {
            stages: patch.trailing_zeros() as usize,
            ..Default::default()
        }
    }

    pub fn stage_widths(&self, embed_dim: usize) -> Vec<usize> {
        if self.widths.is_empty() {
            (1..=self.stages).map(|i| (embed_dim >> i).max(1)).collect()
        } else {
            self.widths.clone()
        }
    }

    pub fn validate(&self, patch: usize) -> Result<()> {
        if self.stages >= usize::BITS as usize || 1usize << self.stages != patch {
            return Err(Error::UpsampleConfig {
                stages: self.stages,
                patch,
            });
        }
        if !self.widths.is_empty() && self.widths.len() != self.stages {
            return Err(Error::Config(format!(
                "{} decoder widths for {} stages",
                self.widths.len(),
                self.stages
            )));
        }
        if self.classes != 2 {
            return Err(Error::Config("the decoder emits exactly two classes".into()));
        }
        Ok(())
    }
}

/// Backbone behind the adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    /// Transformer encoder with a convolutional upsampling decoder.
    Geofm { encoder: EncoderSpec, decoder: DecoderSpec },
    /// Compact U-Net without a pretrained backbone.
    Unet { widths: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Input channel names, in order.
    pub bands: Vec<String>,
    pub adapter: AdapterSpec,
    pub architecture: Architecture,
    pub tuning: TuningStrategy,
    pub seed: u64,
}

impl ModelSpec {
    /// Toy ViT (patch 16, embed 64, depth 4, 4 heads) with a 4-stage decoder.
    pub fn toy_vit(bands: &[String], adapter: AdapterKind, tuning: TuningStrategy) -> Self {
        Self::toy_vit_with_patch(bands, adapter, tuning, 16)
    }

    pub fn toy_vit_with_patch(bands: &[String], adapter: AdapterKind, tuning: TuningStrategy, patch: usize) -> Self {
        let encoder = EncoderSpec {
            patch_size: patch,
            ..Default::default()
        };
        Self {
            name: "ToyViT".into(),
            bands: bands.to_vec(),
            adapter: AdapterSpec::new(adapter, bands.len()),
            architecture: Architecture::Geofm {
                encoder,
                decoder: DecoderSpec::for_patch(patch),
            },
            tuning,
            seed: 0,
        }
    }

    /// Reference U-Net with widths 16/32/64.
    pub fn unet(bands: &[String], adapter: AdapterKind) -> Self {
        Self {
            name: "U-Net".into(),
            bands: bands.to_vec(),
            adapter: AdapterSpec::new(adapter, bands.len()),
            architecture: Architecture::Unet {
                widths: vec![16, 32, 64],
            },
            tuning: TuningStrategy::Full,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.len() != self.adapter.b_in {
            return Err(Error::ChannelCount {
                expected: self.adapter.b_in,
                actual: self.bands.len(),
            });
        }
        match &self.architecture {
            Architecture::Geofm { encoder, decoder } => {
                self.adapter.validate()?;
                encoder.validate()?;
                decoder.validate(encoder.patch_size)?;
            }
            Architecture::Unet { widths } => {
                if self.tuning == TuningStrategy::Frozen {
                    return Err(Error::BaselineTuning);
                }
                if widths.is_empty() || widths.contains(&0) {
                    return Err(Error::Config("U-Net widths must be positive".into()));
                }
                if self.adapter.kind != AdapterKind::None {
                    self.adapter.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Spatial multiple every input side must be divisible by.
    pub fn spatial_multiple(&self) -> usize {
        match &self.architecture {
            Architecture::Geofm { encoder, .. } => encoder.patch_size,
            Architecture::Unet { widths } => 1 << (widths.len() - 1),
        }
    }
}
