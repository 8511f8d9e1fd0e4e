//! Static SVG figures. Every plotted value is the rounded value printed in
//! the backing table.

use std::path::Path;

use plotters::prelude::*;

use super::tables::{cell, PERCENT_DECIMALS, RATIO_DECIMALS};
use crate::error::{Error, Result};
use crate::harness::{DomainOutcome, LabelOutcome};

const SIZE: (u32, u32) = (720, 440);

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Config(format!("plot: {e}"))
}

fn upper(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, f64::max);
    if m > 0.0 {
        m * 1.1
    } else {
        1.0
    }
}

/// Grouped bars: one group per label, one bar per series.
pub fn bar_chart(path: &Path, title: &str, y_desc: &str, groups: &[String], series: &[(String, Vec<f64>)]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let n = groups.len().max(1);
    let top = upper(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0f64..n as f64, 0f64..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            groups.get(i).cloned().unwrap_or_default()
        })
        .y_desc(y_desc)
        .draw()
        .map_err(plot_err)?;
    let width = 0.8 / series.len().max(1) as f64;
    for (s, (name, values)) in series.iter().enumerate() {
        let color = Palette99::pick(s).mix(0.9).to_rgba();
        chart
            .draw_series(values.iter().enumerate().map(|(g, &v)| {
                let x0 = g as f64 + 0.1 + s as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, v)], color.filled())
            }))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// One line per series over categorical x positions.
pub fn line_chart(path: &Path, title: &str, y_desc: &str, xs: &[String], series: &[(String, Vec<f64>)]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let n = xs.len().max(1);
    let top = upper(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.5f64..n as f64 - 0.5, 0f64..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                xs.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .x_desc("labelled fraction (%)")
        .y_desc(y_desc)
        .draw()
        .map_err(plot_err)?;
    for (s, (name, values)) in series.iter().enumerate() {
        let color = Palette99::pick(s).to_rgba();
        let points: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        chart
            .draw_series(LineSeries::new(points.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart
            .draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn fractions(outcome: &LabelOutcome) -> Vec<f64> {
    let mut ks: Vec<f64> = outcome.subsets.iter().map(|s| s.k).collect();
    ks.sort_by(|a, b| b.total_cmp(a));
    ks.dedup();
    ks
}

/// Score-versus-fraction curve, RPD bars and DE bars.
pub fn label_figures(outcome: &LabelOutcome, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ks = fractions(outcome);
    let labels: Vec<String> = ks.iter().map(|k| format!("{k}")).collect();
    let mut scores = Vec::new();
    let mut rpd = Vec::new();
    for m in &outcome.models {
        let at = |k: f64, v: Option<f64>, d: usize| v.map(|v| cell(v, d).1).unwrap_or_else(|| {
            log::warn!("{} has no value at k = {k}", m.model);
            0.0
        });
        scores.push((
            m.model.clone(),
            ks.iter().map(|&k| at(k, m.report.score(k), PERCENT_DECIMALS)).collect(),
        ));
        rpd.push((
            m.model.clone(),
            ks.iter().map(|&k| at(k, m.report.rpd_at(k), RATIO_DECIMALS)).collect(),
        ));
    }
    let curve = dir.join("score_vs_fraction.svg");
    line_chart(&curve, "mIoU versus labelled fraction", "mIoU (%)", &labels, &scores)?;
    let rpd_path = dir.join("rpd_bars.svg");
    bar_chart(&rpd_path, "Relative performance drop", "RPD", &labels, &rpd)?;
    let de_path = dir.join("de_bars.svg");
    let names: Vec<String> = outcome.models.iter().map(|m| m.model.clone()).collect();
    let de = vec![(
        "DE".to_string(),
        outcome
            .models
            .iter()
            .map(|m| m.report.de.map(|v| cell(v, RATIO_DECIMALS).1).unwrap_or(0.0))
            .collect(),
    )];
    bar_chart(&de_path, "Data efficiency", "DE", &names, &de)?;
    Ok(vec![curve, rpd_path, de_path])
}

/// Retention ratios per model.
pub fn retention_figure(outcomes: &[DomainOutcome], dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let groups: Vec<String> = outcomes.iter().map(|o| o.model.clone()).collect();
    let pick = |f: fn(&DomainOutcome) -> f64| -> Vec<f64> { outcomes.iter().map(|o| cell(f(o), RATIO_DECIMALS).1).collect() };
    let series = vec![
        ("Gen/Test".to_string(), pick(|o| o.transfer.r_site)),
        ("Ext/Gen".to_string(), pick(|o| o.transfer.r_ext)),
        ("Ext/Test".to_string(), pick(|o| o.transfer.r_2hop)),
    ];
    let path = dir.join("retention_bars.svg");
    bar_chart(&path, "Retention across domains", "ratio", &groups, &series)?;
    Ok(path)
}
