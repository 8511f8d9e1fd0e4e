use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::Split;
use crate::error::{Error, Result};
use crate::harness::{write_json, DomainOutcome, LabelOutcome, RunRecord, SkippedCell};

/// Percentages carry two decimals, ratios four.
pub const PERCENT_DECIMALS: usize = 2;
pub const RATIO_DECIMALS: usize = 4;

/// Formatted cell and the value it denotes; figures plot the latter so
/// every point matches a table cell.
pub fn cell(value: f64, decimals: usize) -> (String, f64) {
    let text = format!("{value:.decimals$}");
    let parsed = text.parse().unwrap_or(value);
    (text, parsed)
}

pub fn percent(value: f64) -> String {
    cell(value, PERCENT_DECIMALS).0
}

pub fn ratio(value: f64) -> String {
    cell(value, RATIO_DECIMALS).0
}

/// One evaluated configuration; metric values are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub bands: String,
    pub b_in: usize,
    pub adapter: String,
    pub tuning: String,
    pub loss: String,
    pub split: Split,
    pub miou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub macc: f64,
    pub run_id: String,
}

pub const METRIC_COLUMNS: [&str; 11] = [
    "model", "bands", "adapter", "tuning", "loss", "miou", "f1", "precision", "recall", "macc", "run_id",
];

impl MetricRow {
    /// Row for the test evaluation of `record`, or its first evaluation when
    /// no test split was scored.
    pub fn from_record(record: &RunRecord) -> Option<Self> {
        let eval = record.evaluation(Split::Test).or_else(|| record.evaluations.first())?;
        let m = &eval.metrics;
        let c = &record.config;
        Some(Self {
            model: c.model.clone(),
            bands: c.bands.name.clone(),
            b_in: c.bands.b_in(),
            adapter: c.adapter.to_string(),
            tuning: c.tuning.to_string(),
            loss: c.loss.kind.to_string(),
            split: eval.split,
            miou: m.miou * 100.0,
            f1: m.f1 * 100.0,
            precision: m.precision * 100.0,
            recall: m.recall * 100.0,
            macc: m.macc * 100.0,
            run_id: record.run_id.clone(),
        })
    }

    fn sort_key(&self) -> (std::cmp::Reverse<usize>, &str, &str, &str, &str, &str, &str) {
        (
            std::cmp::Reverse(self.b_in),
            &self.bands,
            &self.adapter,
            &self.tuning,
            &self.loss,
            &self.model,
            &self.run_id,
        )
    }
}

/// Rows sorted by band count (descending), then band configuration,
/// adapter, tuning, loss, model and run id.
pub fn metric_rows(records: &[RunRecord]) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = records.iter().filter_map(MetricRow::from_record).collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    rows
}

fn csv_bytes<R: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: R) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &METRIC_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.model.clone(),
                r.bands.clone(),
                r.adapter.clone(),
                r.tuning.clone(),
                r.loss.clone(),
                percent(r.miou),
                percent(r.f1),
                percent(r.precision),
                percent(r.recall),
                percent(r.macc),
                r.run_id.clone(),
            ]
        }),
    )
}

/// `metrics.csv` (rounded) and `metrics.json` (full precision).
pub fn render_tables(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = metric_rows(records);
    let csv = write_file(&dir.join("metrics.csv"), &metrics_csv(&rows)?)?;
    let json = dir.join("metrics.json");
    write_json(&json, &rows)?;
    Ok(vec![csv, json])
}

/// Score and RPD per model and fraction.
pub fn label_scores_csv(outcome: &LabelOutcome) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for m in &outcome.models {
        for (s, r) in m.report.scores.iter().zip(&m.report.rpd) {
            rows.push(vec![m.model.clone(), format!("{}", s.k), percent(s.value), ratio(r.value)]);
        }
    }
    csv_bytes(&["model", "fraction", "miou", "rpd"], rows)
}

pub fn label_de_csv(outcome: &LabelOutcome) -> Result<Vec<u8>> {
    let rows = outcome.models.iter().map(|m| {
        vec![
            m.model.clone(),
            m.report.de.map(ratio).unwrap_or_default(),
        ]
    });
    csv_bytes(&["model", "de"], rows)
}

pub fn transfer_csv(outcomes: &[DomainOutcome]) -> Result<Vec<u8>> {
    let rows = outcomes.iter().map(|o| {
        let t = &o.transfer;
        vec![
            o.model.clone(),
            percent(t.p_in),
            percent(t.p_gen),
            percent(t.p_ext),
            ratio(t.r_site),
            ratio(t.r_ext),
            ratio(t.r_2hop),
        ]
    });
    csv_bytes(&["model", "p_in", "p_gen", "p_ext", "r_site", "r_ext", "r_2hop"], rows)
}

pub fn skipped_csv(skipped: &[SkippedCell]) -> Result<Vec<u8>> {
    let rows = skipped.iter().map(|s| {
        vec![
            s.cell.bands.name.clone(),
            s.cell.adapter.to_string(),
            s.cell.tuning.to_string(),
            s.reason.clone(),
        ]
    });
    csv_bytes(&["bands", "adapter", "tuning", "reason"], rows)
}

pub(crate) fn write_table(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    write_file(path, bytes)
}
