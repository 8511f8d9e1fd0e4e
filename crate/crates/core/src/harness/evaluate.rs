use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{select_bands, standardize, BandConfig, Corpus, Patch, Split, Standardizer};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::metrics::{segmentation_metrics, ConfusionMatrix, MetricReport};
use crate::model::{patches_to_labels, patches_to_tensor, SegModel};

/// Tiles per forward pass at evaluation time. Fixed so results do not
/// depend on the caller.
pub const EVAL_BATCH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub corpus: String,
    pub split: Split,
    pub tiles: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricReport,
}

/// Rejects statistics that were not fitted on a training split.
pub fn check_standardizer(standardizer: &Standardizer) -> Result<()> {
    if standardizer.fitted_on.split != Split::Train {
        return Err(Error::Leakage(format!(
            "standardizer was fitted on the `{}` split",
            standardizer.fitted_on.split
        )));
    }
    Ok(())
}

/// Loads `ids`, standardizes with the full-manifest statistics, then
/// selects the configured bands.
pub fn load_patches(corpus: &Corpus, ids: &[String], bands: &BandConfig, standardizer: &Standardizer) -> Result<Vec<Patch>> {
    ids.par_iter()
        .map(|id| {
            let p = standardize(&corpus.patch(id)?, standardizer)?;
            select_bands(&p, bands, corpus.bands())
        })
        .collect()
}

/// Mean validation loss over images and the thresholded confusion matrix.
pub fn score_patches(
    model: &SegModel,
    patches: &[Patch],
    loss: Option<&LossSpec>,
    threshold: f64,
) -> Result<(Option<f64>, ConfusionMatrix)> {
    let mut total_loss = 0.0;
    let mut cm = ConfusionMatrix::default();
    for chunk in patches.chunks(EVAL_BATCH) {
        let refs: Vec<&Patch> = chunk.iter().collect();
        let x = patches_to_tensor(&refs)?;
        let logits = model.logits(&x)?;
        if let Some(spec) = loss {
            let z: Vec<f64> = logits.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1()?;
            let labels = patches_to_labels(&refs);
            let (v, _) = spec.batch_value_and_grad(&z, &labels, chunk.len())?;
            total_loss += v * chunk.len() as f64;
        }
        let probs = candle_nn::ops::softmax(&logits, 1)?.narrow(1, 1, 1)?.squeeze(1)?;
        let flat: Vec<f32> = probs.flatten_all()?.to_vec1()?;
        let hw = flat.len() / chunk.len();
        for (tile, patch) in chunk.iter().enumerate() {
            let probs = &flat[tile * hw..(tile + 1) * hw];
            for (&p, &y) in probs.iter().zip(patch.mask.iter()) {
                let pred = p as f64 >= threshold;
                match (pred, y == 1) {
                    (true, true) => cm.tp += 1,
                    (true, false) => cm.fp += 1,
                    (false, true) => cm.fn_ += 1,
                    (false, false) => cm.tn += 1,
                }
            }
        }
    }
    let mean_loss = loss.map(|_| total_loss / patches.len().max(1) as f64);
    Ok((mean_loss, cm))
}

/// Tile-by-tile evaluation of `split` under the training-split statistics.
pub fn evaluate(
    model: &SegModel,
    corpus: &Corpus,
    split: Split,
    bands: &BandConfig,
    standardizer: &Standardizer,
    threshold: f64,
) -> Result<SplitEval> {
    check_standardizer(standardizer)?;
    let ids = corpus.ids(split);
    if ids.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let patches = load_patches(corpus, ids, bands, standardizer)?;
    let (_, confusion) = score_patches(model, &patches, None, threshold)?;
    Ok(SplitEval {
        corpus: corpus.name().to_string(),
        split,
        tiles: patches.len(),
        confusion,
        metrics: segmentation_metrics(&confusion)?,
    })
}
