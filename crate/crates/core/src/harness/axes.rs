//! The three experiment axes: sensor (band configuration × adapter ×
//! tuning), label (training fraction) and domain (transfer without
//! target-side adaptation).

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::evaluate::{check_standardizer, evaluate, SplitEval};
use super::layout::OutLayout;
use super::train::{train, RunRecord, SubsetRef, TrainOptions};
use crate::datasets::{stratified_subset, BandConfig, Corpus, Split, Standardizer, SubsetSelection, DEFAULT_STRATA};
use crate::error::{Error, Result};
use crate::metrics::{efficiency_report, transfer_report, EfficiencyReport, TransferReport};
use crate::model::{AdapterKind, SegModel, TuningStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCell {
    pub bands: BandConfig,
    pub adapter: AdapterKind,
    pub tuning: TuningStrategy,
}

/// Cartesian product in the given order.
pub fn sensor_grid(bands: &[BandConfig], adapters: &[AdapterKind], tunings: &[TuningStrategy]) -> Vec<SensorCell> {
    let mut cells = Vec::new();
    for b in bands {
        for &adapter in adapters {
            for &tuning in tunings {
                cells.push(SensorCell {
                    bands: b.clone(),
                    adapter,
                    tuning,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub cell: SensorCell,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorOutcome {
    pub runs: Vec<RunRecord>,
    pub skipped: Vec<SkippedCell>,
}

/// One train and test evaluation per valid cell; `base` supplies the
/// model, loss and schedule. Cells that fail validation are recorded as
/// skipped instead of aborting the grid.
pub fn run_axis_sensor(
    corpus: &Corpus,
    base: &TrainConfig,
    cells: &[SensorCell],
    out: Option<&OutLayout>,
) -> Result<SensorOutcome> {
    let mut outcome = SensorOutcome {
        runs: Vec::new(),
        skipped: Vec::new(),
    };
    for cell in cells {
        let config = TrainConfig {
            bands: cell.bands.clone(),
            adapter: cell.adapter,
            tuning: cell.tuning,
            ..base.clone()
        };
        if let Err(e) = config.validate().and_then(|_| config.bands.resolve(corpus.bands()).map(|_| ())) {
            log::warn!("skipping {} / {} / {}: {e}", cell.bands.name, cell.adapter, cell.tuning);
            outcome.skipped.push(SkippedCell {
                cell: cell.clone(),
                reason: e.to_string(),
            });
            continue;
        }
        let options = TrainOptions {
            out: out.cloned(),
            ..Default::default()
        };
        outcome.runs.push(train(corpus, &config, &options)?.record);
    }
    Ok(outcome)
}

/// Label of a model in label-axis outputs.
pub fn model_label(config: &TrainConfig) -> String {
    format!("{}/{}/{}/{}", config.model, config.bands.name, config.adapter, config.tuning)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEfficiency {
    pub model: String,
    pub config_fingerprint: String,
    /// Run ids aligned with the subsets of the enclosing outcome.
    pub run_ids: Vec<String>,
    pub report: EfficiencyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub subsets: Vec<SubsetRef>,
    pub models: Vec<ModelEfficiency>,
    #[serde(skip)]
    pub runs: Vec<RunRecord>,
}

/// Draws `D_k` once per fraction. With an output root, each manifest is
/// written to `subsets/` and its path recorded.
pub fn prepare_subsets(corpus: &Corpus, fractions: &[f64], seed: u64, out: Option<&OutLayout>) -> Result<Vec<(SubsetSelection, SubsetRef)>> {
    fractions
        .iter()
        .map(|&k| {
            let subset = stratified_subset(corpus, k, seed, DEFAULT_STRATA)?;
            let mut r = SubsetRef::of(&subset)?;
            if let Some(layout) = out {
                let path = layout.write_subset(&subset)?;
                r.path = Some(layout.relative(&path));
            }
            Ok((subset, r))
        })
        .collect()
}

/// Reloads the shared manifest for `k` and checks it against the hash fixed
/// when the subsets were drawn.
fn shared_subset(subset: &SubsetSelection, reference: &SubsetRef, out: Option<&OutLayout>) -> Result<SubsetSelection> {
    let current = match (out, &reference.path) {
        (Some(layout), Some(rel)) => SubsetSelection::read_json(&layout.resolve(rel))?,
        _ => subset.clone(),
    };
    if current.manifest_hash()? != reference.manifest_hash {
        return Err(Error::SharedSubset { k: reference.k });
    }
    Ok(current)
}

/// Fine-tunes every model on every `D_k` with identical hyperparameters
/// and scores it on the full test split. `P(k)` is the test mIoU in percent.
pub fn run_axis_label(
    corpus: &Corpus,
    models: &[TrainConfig],
    fractions: &[f64],
    seed: u64,
    out: Option<&OutLayout>,
) -> Result<LabelOutcome> {
    if !fractions.contains(&100.0) {
        return Err(Error::MissingBaseline);
    }
    let subsets = prepare_subsets(corpus, fractions, seed, out)?;
    let mut result = LabelOutcome {
        subsets: subsets.iter().map(|(_, r)| r.clone()).collect(),
        models: Vec::new(),
        runs: Vec::new(),
    };
    for config in models {
        let mut scores = Vec::new();
        let mut run_ids = Vec::new();
        for (subset, reference) in &subsets {
            let subset = shared_subset(subset, reference, out)?;
            let options = TrainOptions {
                subset: Some(subset),
                out: out.cloned(),
                tag: format!("k{}", reference.k),
                ..Default::default()
            };
            let run = train(corpus, config, &options)?.record;
            let eval = run
                .evaluation(Split::Test)
                .ok_or_else(|| Error::EmptySplit(Split::Test.to_string()))?;
            scores.push((reference.k, eval.metrics.miou * 100.0));
            run_ids.push(run.run_id.clone());
            result.runs.push(run);
        }
        result.models.push(ModelEfficiency {
            model: model_label(config),
            config_fingerprint: config.fingerprint(),
            run_ids,
            report: efficiency_report(&scores)?,
        });
    }
    Ok(result)
}

/// Role of an evaluation target on the domain axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRole {
    /// In-domain test split.
    In,
    /// Same corpus, unseen sites.
    Gen,
    /// Different corpus.
    Ext,
}

#[derive(Debug, Clone, Copy)]
pub struct DomainTarget<'a> {
    pub role: DomainRole,
    pub corpus: &'a Corpus,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainOutcome {
    pub model: String,
    pub run_id: Option<String>,
    /// `(role, evaluation)` in the order In, Gen, Ext.
    pub evaluations: Vec<(DomainRole, SplitEval)>,
    pub transfer: TransferReport,
}

fn check_targets(train_corpus: &Corpus, targets: &[DomainTarget<'_>; 3]) -> Result<()> {
    for (t, role) in targets.iter().zip([DomainRole::In, DomainRole::Gen, DomainRole::Ext]) {
        if t.role != role {
            return Err(Error::Config(format!("domain targets must be ordered In, Gen, Ext; found {:?}", t.role)));
        }
        if t.corpus.bands() != train_corpus.bands() {
            return Err(Error::BandManifestMismatch {
                target: t.corpus.name().to_string(),
            });
        }
    }
    Ok(())
}

/// Evaluates an already fine-tuned model as is on the three targets, with
/// the statistics of its own training split.
pub fn evaluate_transfer(
    model: &SegModel,
    train_corpus: &Corpus,
    standardizer: &Standardizer,
    bands: &BandConfig,
    threshold: f64,
    targets: &[DomainTarget<'_>; 3],
) -> Result<DomainOutcome> {
    check_targets(train_corpus, targets)?;
    check_standardizer(standardizer)?;
    if standardizer.fitted_on.corpus != train_corpus.fingerprint() {
        return Err(Error::Leakage(
            "transfer evaluation must reuse the statistics of the training corpus".into(),
        ));
    }
    let mut evaluations = Vec::with_capacity(3);
    for t in targets {
        let eval = evaluate(model, t.corpus, t.split, bands, standardizer, threshold)?;
        evaluations.push((t.role, eval));
    }
    let p = |i: usize| evaluations[i].1.metrics.miou * 100.0;
    let transfer = transfer_report(p(0), p(1), p(2))?;
    Ok(DomainOutcome {
        model: String::new(),
        run_id: None,
        evaluations,
        transfer,
    })
}

/// Fine-tunes on `train_corpus` only, then evaluates on every target.
/// Band manifests are checked before any training or inference.
pub fn run_axis_domain(
    train_corpus: &Corpus,
    config: &TrainConfig,
    targets: &[DomainTarget<'_>; 3],
    out: Option<&OutLayout>,
) -> Result<DomainOutcome> {
    check_targets(train_corpus, targets)?;
    let options = TrainOptions {
        eval_splits: Vec::new(),
        out: out.cloned(),
        tag: "domain".into(),
        ..Default::default()
    };
    let run = train(train_corpus, config, &options)?;
    let mut outcome = evaluate_transfer(
        &run.model,
        train_corpus,
        &run.standardizer,
        &config.bands,
        config.threshold,
        targets,
    )?;
    outcome.model = model_label(config);
    outcome.run_id = Some(run.record.run_id);
    Ok(outcome)
}
