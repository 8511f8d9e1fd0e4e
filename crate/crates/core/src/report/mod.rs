//! Tables and figures rendered from stored run records and axis outcomes.
//!
//! Regenerating a report from the same inputs gives byte-identical files.

mod figures;
mod tables;

use std::collections::HashSet;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::{read_json, DomainOutcome, LabelOutcome, OutLayout, RunRecord, SensorOutcome};

pub use figures::{bar_chart, label_figures, line_chart, retention_figure};
pub use tables::{
    cell, label_de_csv, label_scores_csv, metric_rows, metrics_csv, percent, ratio, render_tables, skipped_csv,
    transfer_csv, MetricRow, METRIC_COLUMNS, PERCENT_DECIMALS, RATIO_DECIMALS,
};

/// Files written by [`render_report`], in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub files: Vec<PathBuf>,
}

fn require_runs(known: &HashSet<String>, ids: impl IntoIterator<Item = String>, source: &str) -> Result<()> {
    for id in ids {
        if !known.contains(&id) {
            return Err(Error::DanglingReference(format!("{source} refers to unknown run `{id}`")));
        }
    }
    Ok(())
}

/// Renders tables and figures under `tables/` and `figures/` from the
/// records in `runs/` (all of them, or only `runs` when given) and any
/// stored axis outcomes. Every referenced artifact is verified first.
pub fn render_report(layout: &OutLayout, runs: Option<&[String]>) -> Result<ReportBundle> {
    let ids = match runs {
        Some(ids) => ids.to_vec(),
        None => layout.run_ids()?,
    };
    let records: Vec<RunRecord> = ids.iter().map(|id| layout.read_record(id)).collect::<Result<_>>()?;
    for r in &records {
        layout.verify_record(r)?;
    }
    let known: HashSet<String> = layout.run_ids()?.into_iter().collect();
    let tables = layout.tables_dir();
    let figures = layout.figures_dir();
    let mut bundle = ReportBundle {
        files: render_tables(&records, &tables)?,
    };

    let sensor_path = layout.axis_path("sensor");
    if sensor_path.exists() {
        let sensor: SensorOutcome = read_json(&sensor_path)?;
        require_runs(&known, sensor.runs.iter().map(|r| r.run_id.clone()), "sensor axis")?;
        let sensor_records: Vec<RunRecord> = sensor.runs.iter().map(|r| layout.read_record(&r.run_id)).collect::<Result<_>>()?;
        let path = tables.join("sensor.csv");
        bundle.files.push(tables::write_table(&path, &metrics_csv(&metric_rows(&sensor_records))?)?);
        let path = tables.join("sensor_skipped.csv");
        bundle.files.push(tables::write_table(&path, &skipped_csv(&sensor.skipped)?)?);
    }

    let label_path = layout.axis_path("label");
    if label_path.exists() {
        let label: LabelOutcome = read_json(&label_path)?;
        require_runs(&known, label.models.iter().flat_map(|m| m.run_ids.clone()), "label axis")?;
        for s in &label.subsets {
            if let Some(rel) = &s.path {
                let stored = crate::datasets::SubsetSelection::read_json(&layout.resolve(rel))?;
                if stored.manifest_hash()? != s.manifest_hash {
                    return Err(Error::DanglingReference(format!("subset manifest {rel} changed")));
                }
            }
        }
        bundle.files.push(tables::write_table(&tables.join("label_scores.csv"), &label_scores_csv(&label)?)?);
        bundle.files.push(tables::write_table(&tables.join("label_de.csv"), &label_de_csv(&label)?)?);
        let json = tables.join("label_axis.json");
        crate::harness::write_json(&json, &label)?;
        bundle.files.push(json);
        bundle.files.extend(label_figures(&label, &figures)?);
    }

    let domain_path = layout.axis_path("domain");
    if domain_path.exists() {
        let domain: Vec<DomainOutcome> = read_json(&domain_path)?;
        require_runs(&known, domain.iter().filter_map(|d| d.run_id.clone()), "domain axis")?;
        bundle.files.push(tables::write_table(&tables.join("transfer.csv"), &transfer_csv(&domain)?)?);
        let json = tables.join("transfer.json");
        crate::harness::write_json(&json, &domain)?;
        bundle.files.push(json);
        bundle.files.push(retention_figure(&domain, &figures)?);
    }
    Ok(bundle)
}
