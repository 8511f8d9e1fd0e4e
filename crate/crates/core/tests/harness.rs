use geofm_bench::datasets::synthetic::{synthetic_corpus, SplitSizes, SyntheticSpec};
use geofm_bench::datasets::{
    fit_standardizer, select_bands, BandConfig, Corpus, CorpusOptions, FitPolicy, Split, SplitManifest,
    SubsetSelection,
};
use geofm_bench::error::Error;
use geofm_bench::harness::{
    evaluate_transfer, run_axis_domain, run_axis_label, run_axis_sensor, sensor_grid, train, DomainRole,
    DomainTarget, OutLayout, TrainConfig, TrainOptions,
};
use geofm_bench::losses::LossSpec;
use geofm_bench::model::{AdapterKind, TuningStrategy};

fn corpus_with(name: &str, seed: u64, sizes: SplitSizes) -> Corpus {
    let spec = SyntheticSpec {
        size: 32,
        seed,
        ..Default::default()
    };
    synthetic_corpus(name, &spec, sizes).unwrap()
}

fn corpus() -> Corpus {
    corpus_with(
        "toy",
        11,
        SplitSizes {
            train: 10,
            val: 2,
            test: 3,
            generalizability: 2,
            external: 0,
        },
    )
}

fn config() -> TrainConfig {
    let mut c = TrainConfig::toy_vit_with_patch(
        BandConfig::hls_6b(),
        AdapterKind::None,
        TuningStrategy::Full,
        LossSpec::wce(),
        8,
    );
    c.epochs = 3;
    c.batch_size = 4;
    c.lr = 1e-3;
    c
}

#[test]
fn same_config_and_seed_reproduce_the_run() {
    let c = corpus();
    let a = train(&c, &config(), &TrainOptions::default()).unwrap().record;
    let b = train(&c, &config(), &TrainOptions::default()).unwrap().record;
    assert_eq!(a.config_fingerprint, b.config_fingerprint);
    assert_eq!(a.selected_epoch, b.selected_epoch);
    for (x, y) in a.val_loss.iter().zip(&b.val_loss) {
        assert!((x - y).abs() <= 1e-6);
    }
    assert_eq!(a.evaluations, b.evaluations);
}

#[test]
fn runs_every_epoch_and_keeps_lowest_validation_loss() {
    let c = corpus();
    let mut cfg = config();
    cfg.epochs = 5;
    let r = train(&c, &cfg, &TrainOptions::default()).unwrap().record;
    assert_eq!(r.epochs_run, 5);
    assert_eq!(r.train_loss.len(), 5);
    assert_eq!(r.val_loss.len(), 5);
    assert_eq!(r.steps, 5 * 3);
    assert_eq!(Some(r.selected_epoch), geofm_bench::losses::best_epoch(&r.val_loss));
    assert!(r.wall_clock_s > 0.0);
}

#[test]
fn zero_learning_rate_is_a_null_update() {
    let c = corpus();
    let mut cfg = config();
    cfg.lr = 0.0;
    let run = train(&c, &cfg, &TrainOptions::default()).unwrap();
    let first = run.record.val_loss[0];
    assert!(run.record.val_loss.iter().all(|&v| v == first));
    let fresh = geofm_bench::model::SegModel::build(&cfg.model_spec()).unwrap();
    let [a0, e0, d0] = fresh.snapshot().unwrap();
    let [a1, e1, d1] = run.model.snapshot().unwrap();
    for (x, y) in a0.iter().chain(&e0).chain(&d0).zip(a1.iter().chain(&e1).chain(&d1)) {
        let x: Vec<f32> = x.flatten_all().unwrap().to_vec1().unwrap();
        let y: Vec<f32> = y.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn exploding_updates_report_divergence() {
    let c = corpus();
    let mut cfg = config();
    cfg.lr = 1e38;
    cfg.epochs = 4;
    match train(&c, &cfg, &TrainOptions::default()) {
        Err(Error::Divergence { epoch }) => assert!((1..=4).contains(&epoch)),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.record.val_loss)),
    }
}

#[test]
fn foreign_standardizer_is_leakage() {
    let c = corpus();
    let fitted_on_val = fit_standardizer(&c, Split::Val, FitPolicy::AllowAnySplit).unwrap();
    let options = TrainOptions {
        standardizer: Some(fitted_on_val),
        ..Default::default()
    };
    assert!(matches!(train(&c, &config(), &options), Err(Error::Leakage(_))));
    let other = corpus_with("other", 3, SplitSizes { train: 2, val: 1, ..Default::default() });
    let options = TrainOptions {
        standardizer: Some(fit_standardizer(&other, Split::Train, FitPolicy::TrainOnly).unwrap()),
        ..Default::default()
    };
    assert!(matches!(train(&c, &config(), &options), Err(Error::Leakage(_))));
}

#[test]
fn records_close_over_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let layout = OutLayout::new(dir.path());
    let c = corpus();
    let options = TrainOptions {
        out: Some(layout.clone()),
        ..Default::default()
    };
    let run = train(&c, &config(), &options).unwrap().record;
    let back = layout.read_record(&run.run_id).unwrap();
    assert_eq!(back, run);
    layout.verify_record(&back).unwrap();
    assert_eq!(layout.run_ids().unwrap(), vec![run.run_id.clone()]);

    let ck = run.checkpoint.as_ref().unwrap();
    let file = layout.resolve(&ck.dir).join(&ck.files[0].0);
    std::fs::write(&file, b"tampered").unwrap();
    assert!(matches!(layout.verify_record(&back), Err(Error::DanglingReference(_))));
    assert!(matches!(layout.read_record("nope"), Err(Error::DanglingReference(_))));
}

#[test]
fn sensor_grid_skips_invalid_cells() {
    let c = corpus();
    let cells = sensor_grid(
        &[BandConfig::hls_6b(), BandConfig::full_14b()],
        &[AdapterKind::None],
        &[TuningStrategy::Full],
    );
    let mut base = config();
    base.epochs = 1;
    let out = run_axis_sensor(&c, &base, &cells, None).unwrap();
    assert_eq!(out.runs.len(), 1);
    assert_eq!(out.skipped.len(), 1);
    assert_eq!(out.skipped[0].cell.bands.b_in(), 14);
    let m = &out.runs[0].evaluation(Split::Test).unwrap().metrics;
    for v in [m.miou, m.f1, m.precision, m.recall, m.macc] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn fourteen_band_block_has_four_cells() {
    let cells = sensor_grid(
        &[BandConfig::full_14b()],
        &[AdapterKind::Linear, AdapterKind::ConvHead],
        &[TuningStrategy::Frozen, TuningStrategy::Full],
    );
    assert_eq!(cells.len(), 4);
    for cell in &cells {
        let cfg = TrainConfig {
            bands: cell.bands.clone(),
            adapter: cell.adapter,
            tuning: cell.tuning,
            ..config()
        };
        cfg.validate().unwrap();
    }
}

#[test]
fn label_axis_shares_subsets_across_models() {
    let dir = tempfile::tempdir().unwrap();
    let layout = OutLayout::new(dir.path());
    let c = corpus();
    let mut a = config();
    a.epochs = 1;
    let mut b = a.clone();
    b.adapter = AdapterKind::Linear;
    let out = run_axis_label(&c, &[a.clone(), b], &[100.0, 10.0], 0, Some(&layout)).unwrap();
    assert_eq!(out.subsets.len(), 2);
    assert_eq!(out.models.len(), 2);
    assert_eq!(out.runs.len(), 4);
    for (i, s) in out.subsets.iter().enumerate() {
        let hashes: Vec<&str> = out
            .runs
            .iter()
            .filter(|r| r.subset.as_ref().unwrap().k == s.k)
            .map(|r| r.subset.as_ref().unwrap().manifest_hash.as_str())
            .collect();
        assert_eq!(hashes, vec![s.manifest_hash.as_str(); 2], "fraction #{i}");
    }
    for m in &out.models {
        assert_eq!(m.report.rpd_at(100.0), Some(0.0));
    }
    for r in &out.runs {
        layout.verify_record(r).unwrap();
    }

    // A manifest edited between models breaks the sharing contract.
    let path = layout.subset_path(10.0, 0);
    let mut edited = SubsetSelection::read_json(&path).unwrap();
    edited.ids.reverse();
    edited.ids.pop();
    edited.write_json(&path).unwrap();
    assert!(matches!(
        layout.verify_record(out.runs.iter().find(|r| r.subset.as_ref().unwrap().k == 10.0).unwrap()),
        Err(Error::DanglingReference(_))
    ));
}

#[test]
fn label_axis_requires_full_fraction() {
    let c = corpus();
    assert!(matches!(
        run_axis_label(&c, &[config()], &[10.0], 0, None),
        Err(Error::MissingBaseline)
    ));
}

fn six_band_copy(c: &Corpus) -> Corpus {
    let manifest = BandConfig::hls_6b().sub_manifest(c.bands()).unwrap();
    let mut patches = Vec::new();
    for id in c.splits().all_ids() {
        patches.push(select_bands(&c.patch(id).unwrap(), &BandConfig::hls_6b(), c.bands()).unwrap());
    }
    let splits: SplitManifest = c.splits().clone();
    Corpus::in_memory(
        "six",
        patches,
        manifest,
        splits,
        CorpusOptions {
            patch_size: c.patch_size(),
            validate_sample: 4,
        },
    )
    .unwrap()
}

#[test]
fn domain_axis_identity_and_manifest_guard() {
    let c = corpus();
    let ext = corpus_with(
        "ext",
        5,
        SplitSizes {
            train: 2,
            external: 2,
            ..Default::default()
        },
    );
    let mut cfg = config();
    cfg.epochs = 1;
    let targets = [
        DomainTarget { role: DomainRole::In, corpus: &c, split: Split::Test },
        DomainTarget { role: DomainRole::Gen, corpus: &c, split: Split::Test },
        DomainTarget { role: DomainRole::Ext, corpus: &ext, split: Split::External },
    ];
    let out = run_axis_domain(&c, &cfg, &targets, None).unwrap();
    assert_eq!(out.transfer.r_site, 1.0);
    assert_eq!(out.evaluations.len(), 3);

    let six = six_band_copy(&ext);
    let bad = [targets[0], targets[1], DomainTarget { role: DomainRole::Ext, corpus: &six, split: Split::External }];
    assert!(matches!(
        run_axis_domain(&c, &cfg, &bad, None),
        Err(Error::BandManifestMismatch { .. })
    ));

    // Statistics refitted on a target corpus are rejected.
    let run = train(&c, &cfg, &TrainOptions::default()).unwrap();
    let refit = fit_standardizer(&ext, Split::External, FitPolicy::AllowAnySplit).unwrap();
    assert!(matches!(
        evaluate_transfer(&run.model, &c, &refit, &cfg.bands, 0.5, &targets),
        Err(Error::Leakage(_))
    ));
    let target_train = fit_standardizer(&ext, Split::Train, FitPolicy::TrainOnly).unwrap();
    assert!(matches!(
        evaluate_transfer(&run.model, &c, &target_train, &cfg.bands, 0.5, &targets),
        Err(Error::Leakage(_))
    ));
    evaluate_transfer(&run.model, &c, &run.standardizer, &cfg.bands, 0.5, &targets).unwrap();
}
