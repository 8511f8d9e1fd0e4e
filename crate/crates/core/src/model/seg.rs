use std::path::Path;

use candle_core::{Device, Tensor, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adapter::Adapter;
use super::baseline::UNet;
use super::decoder::Decoder;
use super::params::ParamStore;
use super::spec::{AdapterKind, Architecture, EncoderKind, ModelSpec, TuningStrategy};
use super::vit::{load_external_checkpoint, ToyVit};
use crate::datasets::Patch;
use crate::error::{Error, Result};

pub const ADAPTER_FILE: &str = "adapter.safetensors";
pub const ENCODER_FILE: &str = "encoder.safetensors";
pub const DECODER_FILE: &str = "decoder.safetensors";
pub const MODEL_FILE: &str = "model.json";

/// Single-step timestamp used at fine-tuning time.
pub const FINETUNE_TIMESTAMP: f64 = 1.0;

#[derive(Debug, Clone)]
enum Backbone {
    Geofm { encoder: ToyVit, decoder: Decoder },
    Unet(UNet),
}

/// Adapter, backbone and their parameters. Adapter, encoder and decoder
/// parameters live in separate stores so they can be saved and frozen
/// independently.
#[derive(Debug)]
pub struct SegModel {
    spec: ModelSpec,
    adapter: Adapter,
    backbone: Backbone,
    adapter_params: ParamStore,
    encoder_params: ParamStore,
    decoder_params: ParamStore,
}

/// Metadata written beside the parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    /// Fingerprint of the run configuration that produced the weights.
    pub config_fingerprint: String,
    pub epoch: Option<usize>,
    /// SHA-256 of each parameter file.
    pub files: Vec<(String, String)>,
}

impl SegModel {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut adapter_params = ParamStore::new(spec.seed ^ 0xada9_7e40);
        let mut encoder_params = ParamStore::new(spec.seed ^ 0xe4c0_de40);
        let mut decoder_params = ParamStore::new(spec.seed ^ 0xdec0_de40);
        // the baseline has no fixed channel interface and takes raw bands
        let adapter = match (&spec.architecture, spec.adapter.kind) {
            (Architecture::Unet { .. }, AdapterKind::None) => Adapter::Identity {
                channels: spec.adapter.b_in,
            },
            _ => Adapter::build(&mut adapter_params, &spec.adapter, &spec.bands)?,
        };
        let backbone = match &spec.architecture {
            Architecture::Geofm { encoder, decoder } => {
                let vit = ToyVit::build(&mut encoder_params, encoder, spec.adapter.b_pre)?;
                if encoder.kind == EncoderKind::ExternalCheckpoint {
                    let path = encoder.checkpoint.as_ref().expect("validated");
                    load_external_checkpoint(&encoder_params, path)?;
                }
                let dec = Decoder::build(&mut decoder_params, decoder, encoder.embed_dim, encoder.patch_size)?;
                Backbone::Geofm {
                    encoder: vit,
                    decoder: dec,
                }
            }
            Architecture::Unet { widths } => {
                let in_chans = match spec.adapter.kind {
                    AdapterKind::None => spec.adapter.b_in,
                    _ => spec.adapter.b_pre,
                };
                Backbone::Unet(UNet::build(&mut decoder_params, in_chans, widths, 2)?)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            adapter,
            backbone,
            adapter_params,
            encoder_params,
            decoder_params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tuning(&self) -> TuningStrategy {
        self.spec.tuning
    }

    pub fn adapter_params(&self) -> &ParamStore {
        &self.adapter_params
    }

    pub fn encoder_params(&self) -> &ParamStore {
        &self.encoder_params
    }

    pub fn decoder_params(&self) -> &ParamStore {
        &self.decoder_params
    }

    pub fn num_params(&self) -> usize {
        self.adapter_params.num_params() + self.encoder_params.num_params() + self.decoder_params.num_params()
    }

    /// Parameters handed to the optimizer: the encoder is left out when
    /// frozen.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let mut vars = self.adapter_params.vars();
        if self.spec.tuning == TuningStrategy::Full {
            vars.extend(self.encoder_params.vars());
        }
        vars.extend(self.decoder_params.vars());
        vars
    }

    /// Adapter output `(N, B_pre, H, W)` (or the raw input when bypassed).
    pub fn adapt(&self, x: &Tensor) -> Result<Tensor> {
        self.adapter.forward(x)
    }

    /// Per-pixel logits `(N, 2, H, W)` for input `(N, B_in, H, W)`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let a = self.adapter.forward(x)?;
        match &self.backbone {
            Backbone::Geofm { encoder, decoder } => {
                let (tokens, grid) = encoder.forward(&a, FINETUNE_TIMESTAMP)?;
                decoder.forward(&tokens, grid)
            }
            Backbone::Unet(unet) => unet.forward(&a),
        }
    }

    /// Encoder tokens `(N, L, D)`; `None` for the convolutional baseline.
    pub fn encode(&self, x: &Tensor) -> Result<Option<Tensor>> {
        match &self.backbone {
            Backbone::Geofm { encoder, .. } => {
                let a = self.adapter.forward(x)?;
                Ok(Some(encoder.forward(&a, FINETUNE_TIMESTAMP)?.0))
            }
            Backbone::Unet(_) => Ok(None),
        }
    }

    /// Class probabilities `(N, 2, H, W)`.
    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.logits(x)?, 1)?)
    }

    /// Landslide probability per pixel for each patch, `(N, H, W)`.
    pub fn landslide_probability(&self, patches: &[&Patch]) -> Result<Vec<Array2<f32>>> {
        let x = patches_to_tensor(patches)?;
        let p = self.probabilities(&x)?.narrow(1, 1, 1)?.squeeze(1)?;
        let (n, h, w) = p.dims3()?;
        let flat: Vec<f32> = p.flatten_all()?.to_vec1()?;
        Ok((0..n)
            .map(|i| Array2::from_shape_vec((h, w), flat[i * h * w..(i + 1) * h * w].to_vec()).expect("h*w values"))
            .collect())
    }

    pub fn snapshot(&self) -> Result<[Vec<Tensor>; 3]> {
        Ok([
            self.adapter_params.snapshot()?,
            self.encoder_params.snapshot()?,
            self.decoder_params.snapshot()?,
        ])
    }

    pub fn restore(&self, snapshot: &[Vec<Tensor>; 3]) -> Result<()> {
        self.adapter_params.restore(&snapshot[0])?;
        self.encoder_params.restore(&snapshot[1])?;
        self.decoder_params.restore(&snapshot[2])
    }

    fn stores(&self) -> [(&'static str, &ParamStore); 3] {
        [
            (ADAPTER_FILE, &self.adapter_params),
            (ENCODER_FILE, &self.encoder_params),
            (DECODER_FILE, &self.decoder_params),
        ]
    }

    /// Writes parameters and metadata into `dir`; returns the metadata.
    pub fn save(&self, dir: &Path, config_fingerprint: &str, epoch: Option<usize>) -> Result<CheckpointMeta> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (file, store) in self.stores() {
            if store.num_params() == 0 {
                continue;
            }
            let path = dir.join(file);
            store.save(&path)?;
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            files.push((file.to_string(), hex::encode(Sha256::digest(&bytes))));
        }
        let meta = CheckpointMeta {
            spec: self.spec.clone(),
            config_fingerprint: config_fingerprint.to_string(),
            epoch,
            files,
        };
        let path = dir.join(MODEL_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
        Ok(meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointMeta)> {
        let path = dir.join(MODEL_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&text)?;
        let model = Self::build(&meta.spec)?;
        for (file, store) in model.stores() {
            if store.num_params() == 0 {
                continue;
            }
            let p = dir.join(file);
            if !p.exists() {
                return Err(Error::Checkpoint(format!("{} is missing", p.display())));
            }
            store.load(&p)?;
        }
        Ok((model, meta))
    }
}

/// Stacks `H x W x B` patches into an `(N, B, H, W)` f32 tensor.
pub fn patches_to_tensor(patches: &[&Patch]) -> Result<Tensor> {
    let first = patches.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (h, w, b) = first.image.dim();
    let mut data = Vec::with_capacity(patches.len() * b * h * w);
    for p in patches {
        if p.image.dim() != (h, w, b) {
            return Err(Error::Shape(format!(
                "patch `{}` is {:?}, batch expects {:?}",
                p.id,
                p.image.dim(),
                (h, w, b)
            )));
        }
        let chw = p.image.view().permuted_axes([2, 0, 1]);
        data.extend(chw.iter().copied());
    }
    Ok(Tensor::from_vec(data, (patches.len(), b, h, w), &Device::Cpu)?)
}

/// Row-major labels of a batch, as expected by the loss op.
pub fn patches_to_labels(patches: &[&Patch]) -> Vec<u8> {
    patches.iter().flat_map(|p| p.mask.iter().copied()).collect()
}

/// Landslide wherever the probability reaches `threshold` (ties count as
/// landslide).
pub fn threshold_mask(prob: &Array2<f32>, threshold: f64) -> Array2<u8> {
    prob.mapv(|p| (p as f64 >= threshold) as u8)
}

/// Thresholded prediction for one standardized, band-selected patch.
pub fn predict_mask(model: &SegModel, patch: &Patch, threshold: f64) -> Result<Array2<u8>> {
    let prob = model.landslide_probability(&[patch])?.remove(0);
    Ok(threshold_mask(&prob, threshold))
}
