use std::sync::Arc;
use std::time::Instant;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::layout::OutLayout;
use super::evaluate::{check_standardizer, evaluate, load_patches, score_patches, SplitEval};
use crate::datasets::{augment, fit_standardizer, Corpus, FitPolicy, FitProvenance, Patch, Split, Standardizer, SubsetSelection};
use crate::error::{Error, Result};
use crate::losses::{best_epoch, loss_tensor};
use crate::metrics::segmentation_metrics;
use crate::model::{patches_to_labels, patches_to_tensor, SegModel};

/// Selection key plus adapter, encoder and decoder snapshots.
type Snapshot = (f64, Vec<candle_core::Tensor>, Vec<candle_core::Tensor>, Vec<candle_core::Tensor>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSelection {
    /// Epoch with the lowest validation value of the training loss.
    #[default]
    LowestValLoss,
    /// The final epoch (used for overfitting diagnostics only).
    LastEpoch,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub subset: Option<SubsetSelection>,
    /// Precomputed statistics; fitted on the corpus training split if absent.
    pub standardizer: Option<Standardizer>,
    pub eval_splits: Vec<Split>,
    /// Output root; when set, the checkpoint and run record are written
    /// under `runs/<run_id>/`.
    pub out: Option<OutLayout>,
    pub selection: CheckpointSelection,
    /// Tag folded into the run id, e.g. the label fraction.
    pub tag: String,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            subset: None,
            standardizer: None,
            eval_splits: vec![Split::Test],
            out: None,
            selection: CheckpointSelection::LowestValLoss,
            tag: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRef {
    pub name: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRef {
    pub k: f64,
    pub seed: u64,
    pub size: usize,
    pub manifest_hash: String,
    /// Manifest location relative to the output root, when persisted.
    pub path: Option<String>,
}

impl SubsetRef {
    pub fn of(subset: &SubsetSelection) -> Result<Self> {
        Ok(Self {
            k: subset.k,
            seed: subset.seed,
            size: subset.ids.len(),
            manifest_hash: subset.manifest_hash()?,
            path: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRef {
    /// Directory relative to the output root.
    pub dir: String,
    /// `(file, sha256)` per parameter file.
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: TrainConfig,
    pub config_fingerprint: String,
    pub corpus: CorpusRef,
    pub subset: Option<SubsetRef>,
    pub standardizer: FitProvenance,
    pub train_images: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_miou: Vec<f64>,
    /// 1-based epoch whose weights were kept.
    pub selected_epoch: usize,
    pub epochs_run: usize,
    pub steps: usize,
    pub checkpoint: Option<CheckpointRef>,
    pub evaluations: Vec<SplitEval>,
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn evaluation(&self, split: Split) -> Option<&SplitEval> {
        self.evaluations.iter().find(|e| e.split == split)
    }
}

pub struct TrainedRun {
    pub model: SegModel,
    pub record: RunRecord,
    pub standardizer: Standardizer,
}

fn resolve_standardizer(corpus: &Corpus, given: Option<Standardizer>) -> Result<Standardizer> {
    match given {
        Some(st) => {
            check_standardizer(&st)?;
            if st.fitted_on.corpus != corpus.fingerprint() {
                return Err(Error::Leakage(
                    "standardizer was fitted on a different corpus than the one being trained on".into(),
                ));
            }
            Ok(st)
        }
        None => fit_standardizer(corpus, Split::Train, FitPolicy::TrainOnly),
    }
}

fn mean_image_loss(sum: f64, images: usize) -> f64 {
    sum / images.max(1) as f64
}

/// Fine-tunes a fresh model on the training split (or a subset of it),
/// keeping the checkpoint with the lowest validation loss. Runs exactly
/// `config.epochs` epochs.
pub fn train(corpus: &Corpus, config: &TrainConfig, options: &TrainOptions) -> Result<TrainedRun> {
    let started = Instant::now();
    config.validate()?;
    let (h, w) = corpus.patch_size();
    let multiple = config.model_spec().spatial_multiple();
    if h % multiple != 0 || w % multiple != 0 {
        return Err(Error::PatchGrid {
            height: h,
            width: w,
            patch: multiple,
        });
    }
    let standardizer = resolve_standardizer(corpus, options.standardizer.clone())?;
    config.bands.resolve(corpus.bands())?;

    let train_ids: Vec<String> = match &options.subset {
        Some(s) => {
            let pool: std::collections::HashSet<&String> = corpus.ids(Split::Train).iter().collect();
            if let Some(bad) = s.ids.iter().find(|id| !pool.contains(id)) {
                return Err(Error::Config(format!("subset id `{bad}` is not in the training split")));
            }
            s.ids.clone()
        }
        None => corpus.ids(Split::Train).to_vec(),
    };
    if train_ids.is_empty() {
        return Err(Error::EmptySplit(Split::Train.to_string()));
    }
    let train_set = load_patches(corpus, &train_ids, &config.bands, &standardizer)?;
    let val_set = load_patches(corpus, corpus.ids(Split::Val), &config.bands, &standardizer)?;
    if val_set.is_empty() && options.selection == CheckpointSelection::LowestValLoss {
        return Err(Error::EmptySplit(Split::Val.to_string()));
    }

    let model = SegModel::build(&config.model_spec())?;
    let mut optimizer = AdamW::new(
        model.trainable_vars(),
        ParamsAdamW {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..Default::default()
        },
    )?;

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let mut val_miou = Vec::with_capacity(config.epochs);
    let mut best: Option<Snapshot> = None;
    let mut best_at = 0usize;
    let mut steps = 0usize;
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let owned: Vec<Patch> = batch
                .iter()
                .map(|&i| {
                    if config.augment {
                        augment(&train_set[i], &mut rng)
                    } else {
                        train_set[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&Patch> = owned.iter().collect();
            let x = patches_to_tensor(&refs)?;
            let labels = Arc::new(patches_to_labels(&refs));
            let logits = model.logits(&x)?;
            let loss = loss_tensor(&config.loss, &logits, labels)?;
            let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            optimizer.backward_step(&loss)?;
            epoch_sum += value * batch.len() as f64;
            steps += 1;
        }
        train_loss.push(mean_image_loss(epoch_sum, train_set.len()));

        if !val_set.is_empty() {
            let (vl, cm) = score_patches(&model, &val_set, Some(&config.loss), config.threshold)?;
            let vl = vl.expect("loss requested");
            if !vl.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            val_loss.push(vl);
            val_miou.push(segmentation_metrics(&cm)?.miou);
        }
        let improved = match options.selection {
            CheckpointSelection::LowestValLoss => best.as_ref().is_none_or(|b| val_loss[epoch - 1] < b.0),
            CheckpointSelection::LastEpoch => true,
        };
        if improved {
            let [a, e, d] = model.snapshot()?;
            let key = val_loss.last().copied().unwrap_or(f64::NAN);
            best = Some((key, a, e, d));
            best_at = epoch;
        }
        log::info!(
            "epoch {epoch}/{}: train {:.5} val {}",
            config.epochs,
            train_loss[epoch - 1],
            val_loss.last().map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into())
        );
    }
    if options.selection == CheckpointSelection::LowestValLoss {
        debug_assert_eq!(best_epoch(&val_loss), Some(best_at));
    }
    let (_, a, e, d) = best.expect("at least one epoch");
    model.restore(&[a, e, d])?;

    let run_id = config.run_id(&options.tag);
    let fingerprint = config.fingerprint();
    let checkpoint = match &options.out {
        Some(layout) => {
            let meta = model.save(&layout.checkpoint_dir(&run_id), &fingerprint, Some(best_at))?;
            Some(CheckpointRef {
                dir: layout.relative(&layout.checkpoint_dir(&run_id)),
                files: meta.files,
            })
        }
        None => None,
    };
    let mut evaluations = Vec::new();
    for &split in &options.eval_splits {
        if corpus.ids(split).is_empty() {
            continue;
        }
        evaluations.push(evaluate(&model, corpus, split, &config.bands, &standardizer, config.threshold)?);
    }
    let mut record = RunRecord {
        run_id,
        config: config.clone(),
        config_fingerprint: fingerprint,
        corpus: CorpusRef {
            name: corpus.name().to_string(),
            fingerprint: corpus.fingerprint().to_string(),
        },
        subset: options.subset.as_ref().map(SubsetRef::of).transpose()?,
        standardizer: standardizer.fitted_on.clone(),
        train_images: train_set.len(),
        train_loss,
        val_loss,
        val_miou,
        selected_epoch: best_at,
        epochs_run: config.epochs,
        steps,
        checkpoint,
        evaluations,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    if let Some(layout) = &options.out {
        if let (Some(subset), Some(r)) = (&options.subset, record.subset.as_mut()) {
            let path = layout.subset_path(subset.k, subset.seed);
            if path.exists() {
                r.path = Some(layout.relative(&path));
            }
        }
        layout.write_record(&record)?;
        standardizer.write_json(&layout.standardizer_path(&record.run_id))?;
    }
    Ok(TrainedRun {
        model,
        record,
        standardizer,
    })
}
