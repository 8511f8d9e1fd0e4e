use std::collections::BTreeMap;
use std::path::Path;

use geofm_bench::datasets::synthetic::{synthetic_corpus, SplitSizes, SyntheticSpec};
use geofm_bench::datasets::{BandConfig, Corpus, SubsetSelection};
use geofm_bench::error::Error;
use geofm_bench::harness::{run_axis_label, train, write_json, OutLayout, RunRecord, TrainConfig, TrainOptions};
use geofm_bench::losses::LossSpec;
use geofm_bench::model::{AdapterKind, TuningStrategy};
use geofm_bench::report::{cell, metric_rows, metrics_csv, render_report, render_tables, MetricRow, METRIC_COLUMNS};

fn corpus() -> Corpus {
    let spec = SyntheticSpec {
        size: 32,
        seed: 4,
        ..Default::default()
    };
    let sizes = SplitSizes {
        train: 6,
        val: 2,
        test: 2,
        ..Default::default()
    };
    synthetic_corpus("toy", &spec, sizes).unwrap()
}

fn config(bands: BandConfig, adapter: AdapterKind, tuning: TuningStrategy) -> TrainConfig {
    let mut c = TrainConfig::toy_vit_with_patch(bands, adapter, tuning, LossSpec::wce(), 8);
    c.epochs = 1;
    c.batch_size = 4;
    c.lr = 1e-3;
    c
}

fn grid() -> Vec<TrainConfig> {
    vec![
        config(BandConfig::rgb_nir(), AdapterKind::Linear, TuningStrategy::Frozen),
        config(BandConfig::hls_6b(), AdapterKind::None, TuningStrategy::Full),
        config(BandConfig::full_14b(), AdapterKind::ConvHead, TuningStrategy::Full),
        config(BandConfig::full_14b(), AdapterKind::Linear, TuningStrategy::Frozen),
    ]
}

fn populate(layout: &OutLayout) -> Vec<RunRecord> {
    let c = corpus();
    let options = TrainOptions {
        out: Some(layout.clone()),
        ..Default::default()
    };
    let records: Vec<RunRecord> = grid().iter().map(|cfg| train(&c, cfg, &options).unwrap().record).collect();
    let label = run_axis_label(&c, &grid()[1..2], &[100.0, 50.0], 0, Some(layout)).unwrap();
    write_json(&layout.axis_path("label"), &label).unwrap();
    records
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for sub in ["tables", "figures"] {
        for entry in std::fs::read_dir(root.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            files.insert(format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()), std::fs::read(&path).unwrap());
        }
    }
    files
}

#[test]
fn one_record_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let record = train(&c, &grid()[1], &TrainOptions::default()).unwrap().record;
    let rows = metric_rows(std::slice::from_ref(&record));
    assert_eq!(rows.len(), 1);
    let files = render_tables(&[record], dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRIC_COLUMNS.join(","));
}

#[test]
fn report_is_sorted_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let layout = OutLayout::new(dir.path());
    let records = populate(&layout);

    let first = render_report(&layout, None).unwrap();
    let a = snapshot(dir.path());
    let second = render_report(&layout, None).unwrap();
    let b = snapshot(dir.path());
    assert_eq!(first, second);
    assert_eq!(a, b);
    for name in [
        "tables/metrics.csv",
        "tables/metrics.json",
        "tables/label_scores.csv",
        "tables/label_de.csv",
        "figures/score_vs_fraction.svg",
        "figures/rpd_bars.svg",
        "figures/de_bars.svg",
    ] {
        assert!(a.contains_key(name), "{name} missing");
    }

    // Four grid runs plus two label-axis runs.
    let rows: Vec<MetricRow> = serde_json::from_slice(&a["tables/metrics.json"]).unwrap();
    assert_eq!(rows.len(), records.len() + 2);
    let keys: Vec<(usize, &str, &str)> = rows.iter().map(|r| (r.b_in, r.adapter.as_str(), r.tuning.as_str())).collect();
    assert_eq!(&keys[..2], &[(14, "conv", "full"), (14, "linear", "frozen")]);
    assert!(keys.windows(2).all(|w| w[0].0 >= w[1].0));
    assert_eq!(keys.last().unwrap().0, 4);

    let mut reader = csv::Reader::from_reader(&a["tables/metrics.csv"][..]);
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, METRIC_COLUMNS);
    let csv_rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(csv_rows.len(), rows.len());
    for (row, rec) in rows.iter().zip(&csv_rows) {
        assert_eq!(&rec[10], row.run_id);
        for (col, v) in [(5, row.miou), (6, row.f1), (7, row.precision), (8, row.recall), (9, row.macc)] {
            let text = &rec[col];
            assert_eq!(text.split('.').nth(1).map(str::len), Some(2), "{text}");
            assert_eq!(text.parse::<f64>().unwrap(), cell(v, 2).1);
            assert!((text.parse::<f64>().unwrap() - v).abs() <= 0.005 + 1e-9);
        }
    }
    assert_eq!(metrics_csv(&rows).unwrap(), a["tables/metrics.csv"]);
}

#[test]
fn unknown_or_tampered_runs_are_dangling() {
    let dir = tempfile::tempdir().unwrap();
    let layout = OutLayout::new(dir.path());
    let records = populate(&layout);
    assert!(matches!(
        render_report(&layout, Some(&["missing-id".to_string()])),
        Err(Error::DanglingReference(_))
    ));

    let subset = std::fs::read_dir(layout.subsets_dir()).unwrap().next().unwrap().unwrap().path();
    let mut stored = SubsetSelection::read_json(&subset).unwrap();
    stored.ids.pop();
    stored.write_json(&subset).unwrap();
    assert!(matches!(
        render_report(&layout, Some(&[records[0].run_id.clone()])),
        Err(Error::DanglingReference(_))
    ));
}
