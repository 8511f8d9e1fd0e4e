use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::BandConfig;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::model::{AdapterKind, Architecture, DecoderSpec, EncoderSpec, ModelSpec, TuningStrategy};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Display name of the model family ("ToyViT", "U-Net").
    pub model: String,
    pub architecture: Architecture,
    pub bands: BandConfig,
    pub adapter: AdapterKind,
    pub tuning: TuningStrategy,
    pub loss: LossSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Random horizontal/vertical flips on training patches.
    pub augment: bool,
    pub threshold: f64,
}

impl TrainConfig {
    /// Toy transformer with the default optimisation schedule (100 epochs,
    /// batch 8, lr 1e-5, no weight decay).
    pub fn toy_vit(bands: BandConfig, adapter: AdapterKind, tuning: TuningStrategy, loss: LossSpec) -> Self {
        Self::toy_vit_with_patch(bands, adapter, tuning, loss, 16)
    }

    pub fn toy_vit_with_patch(
        bands: BandConfig,
        adapter: AdapterKind,
        tuning: TuningStrategy,
        loss: LossSpec,
        patch: usize,
    ) -> Self {
        Self {
            model: "ToyViT".into(),
            architecture: Architecture::Geofm {
                encoder: EncoderSpec {
                    patch_size: patch,
                    ..Default::default()
                },
                decoder: DecoderSpec::for_patch(patch),
            },
            bands,
            adapter,
            tuning,
            loss,
            epochs: 100,
            batch_size: 8,
            lr: 1e-5,
            weight_decay: 0.0,
            seed: 0,
            augment: true,
            threshold: 0.5,
        }
    }

    /// Reference U-Net, always fully trained.
    pub fn unet(bands: BandConfig, adapter: AdapterKind, loss: LossSpec) -> Self {
        Self {
            model: "U-Net".into(),
            architecture: Architecture::Unet {
                widths: vec![16, 32, 64],
            },
            tuning: TuningStrategy::Full,
            ..Self::toy_vit(bands, adapter, TuningStrategy::Full, loss)
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        let spec = match &self.architecture {
            Architecture::Geofm { encoder, .. } => {
                let mut s = ModelSpec::toy_vit_with_patch(
                    &self.bands.channels,
                    self.adapter,
                    self.tuning,
                    encoder.patch_size,
                );
                s.architecture = self.architecture.clone();
                s
            }
            Architecture::Unet { .. } => {
                let mut s = ModelSpec::unet(&self.bands.channels, self.adapter);
                s.architecture = self.architecture.clone();
                s.tuning = self.tuning;
                s
            }
        };
        ModelSpec {
            name: self.model.clone(),
            ..spec
        }
        .with_seed(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate and weight decay must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        self.loss.validate()?;
        self.model_spec().validate()
    }

    /// SHA-256 of the serialized configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Short human-readable identifier; unique per fingerprint.
    pub fn run_id(&self, tag: &str) -> String {
        let raw = format!(
            "{}_{}_{}_{}_{}{}{}_s{}_{}",
            self.model,
            self.bands.name,
            self.adapter,
            self.tuning,
            self.loss.kind,
            if tag.is_empty() { "" } else { "_" },
            tag,
            self.seed,
            &self.fingerprint()[..8]
        );
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '-' })
            .collect()
    }
}
