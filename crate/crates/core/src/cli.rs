//! Command-line entry point.
//!
//! Settings come from flags, then from an optional TOML run file
//! (`--config`), then from built-in defaults. `GEOFM_BENCH_OUT`, when set,
//! replaces `--out`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bandselect::{estimate_mi, sample_pixels, top_k_config, DEFAULT_NEIGHBORS, DEFAULT_PER_IMAGE};
use crate::datasets::synthetic::{synthetic_corpus, SplitSizes, SyntheticSpec};
use crate::datasets::{read_patch, BandConfig, Corpus, CorpusOptions, PatchFormat, Split, SplitManifest, Standardizer, SPLIT_MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::harness::{
    evaluate, prepare_subsets, read_json, run_axis_domain, run_axis_label, run_axis_sensor, sensor_grid, train,
    write_json, DomainOutcome, DomainRole, DomainTarget, OutLayout, TrainConfig, TrainOptions,
};
use crate::losses::{LossKind, LossSpec};
use crate::model::{AdapterKind, SegModel, TuningStrategy};
use crate::report::{label_de_csv, label_figures, label_scores_csv, metric_rows, metrics_csv, render_report, skipped_csv};

pub const OUT_ENV: &str = "GEOFM_BENCH_OUT";

#[derive(Debug, Parser)]
#[command(name = "geofm-bench", version, about = "Band-adaptive landslide segmentation benchmark")]
pub struct Cli {
    /// Output root (replaced by $GEOFM_BENCH_OUT when set).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run file supplying defaults for every flag below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus (optionally writing a synthetic one first) and its subset manifests.
    Prepare(PrepareArgs),
    /// Rank channels by mutual information with the label and keep the top k.
    SelectBands(SelectArgs),
    /// Fine-tune one configuration.
    Train(RunArgs),
    /// Evaluate a stored run on a corpus split.
    Evaluate(EvaluateArgs),
    /// Band configuration x adapter x tuning grid.
    AxisSensor(RunArgs),
    /// Label-fraction sweep with shared subsets.
    AxisLabel(RunArgs),
    /// Train on one corpus and evaluate as is on in-domain, site-shifted and external targets.
    AxisDomain(DomainArgs),
    /// Render tables and figures from stored runs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Band configuration preset names or JSON files, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub bands: Vec<String>,
    /// none, linear or conv; comma separated.
    #[arg(long, value_delimiter = ',')]
    pub adapter: Vec<String>,
    /// frozen or full; comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tuning: Vec<String>,
    /// wce, lovasz or focal.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Label fractions in percent, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    /// toy-vit or unet.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Encoder patch size in pixels.
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args, Clone)]
pub struct PrepareArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Write a synthetic corpus to --corpus before validating it.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 64)]
    pub train: usize,
    #[arg(long, default_value_t = 16)]
    pub val: usize,
    #[arg(long, default_value_t = 16)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub generalizability: usize,
    #[arg(long, default_value_t = 0)]
    pub external: usize,
    /// Channels carrying the label signal in the synthetic corpus.
    #[arg(long, value_delimiter = ',')]
    pub signal_bands: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    pub domain_shift: f32,
    /// raw or hdf5.
    #[arg(long, default_value = "raw")]
    pub format: String,
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Write subset manifests for these label fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct SelectArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PER_IMAGE)]
    pub per_image: usize,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
}

#[derive(Debug, Args, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: String,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args, Clone)]
pub struct DomainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Corpus holding the site-shifted split (defaults to --corpus).
    #[arg(long)]
    pub gen_corpus: Option<PathBuf>,
    #[arg(long)]
    pub ext_corpus: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub in_split: String,
    #[arg(long, default_value = "generalizability")]
    pub gen_split: String,
    #[arg(long, default_value = "external")]
    pub ext_split: String,
}

#[derive(Debug, Args, Clone)]
pub struct ReportArgs {
    /// Restrict the metric table to these runs.
    #[arg(long)]
    pub run: Vec<String>,
}

/// Keys accepted in the TOML run file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub corpus: Option<PathBuf>,
    pub gen_corpus: Option<PathBuf>,
    pub ext_corpus: Option<PathBuf>,
    pub bands: Vec<String>,
    pub adapters: Vec<String>,
    pub tunings: Vec<String>,
    pub loss: Option<String>,
    pub seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    pub model: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub patch_size: Option<usize>,
    pub augment: Option<bool>,
    pub out: Option<PathBuf>,
}

impl RunFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn pick<T: Clone>(flag: &[T], file: &[T], default: &[T]) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else if !file.is_empty() {
        file.to_vec()
    } else {
        default.to_vec()
    }
}

/// Settings after merging flags, run file and defaults.
#[derive(Debug, Clone)]
struct Settings {
    corpus: Option<PathBuf>,
    bands: Vec<String>,
    adapters: Vec<String>,
    tunings: Vec<String>,
    loss: String,
    seeds: Vec<u64>,
    fractions: Vec<f64>,
    model: String,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    patch_size: usize,
    augment: bool,
}

impl Settings {
    fn merge(args: &RunArgs, file: &RunFile) -> Self {
        Self {
            corpus: args.corpus.clone().or_else(|| file.corpus.clone()),
            bands: pick(&args.bands, &file.bands, &["HLS-6B".to_string()]),
            adapters: pick(&args.adapter, &file.adapters, &["none".to_string()]),
            tunings: pick(&args.tuning, &file.tunings, &["full".to_string()]),
            loss: args.loss.clone().or_else(|| file.loss.clone()).unwrap_or_else(|| "wce".into()),
            seeds: pick(&args.seed, &file.seeds, &[0]),
            fractions: pick(&args.fractions, &file.fractions, &[100.0, 10.0, 2.5, 1.25]),
            model: args.model.clone().or_else(|| file.model.clone()).unwrap_or_else(|| "toy-vit".into()),
            epochs: args.epochs.or(file.epochs),
            lr: args.lr.or(file.lr),
            batch_size: args.batch_size.or(file.batch_size),
            patch_size: args.patch_size.or(file.patch_size).unwrap_or(16),
            augment: !args.no_augment && file.augment.unwrap_or(true),
        }
    }

    fn corpus(&self) -> Result<Corpus> {
        open_corpus(self.corpus.as_deref())
    }

    fn config(&self, bands: &str, adapter: &str, tuning: &str, seed: u64) -> Result<TrainConfig> {
        let bands = parse_bands(bands)?;
        let adapter: AdapterKind = adapter.parse()?;
        let tuning: TuningStrategy = tuning.parse()?;
        let loss = LossSpec::new(self.loss.parse::<LossKind>()?);
        let mut c = match self.model.as_str() {
            "toy-vit" => TrainConfig::toy_vit_with_patch(bands, adapter, tuning, loss, self.patch_size),
            "unet" => TrainConfig {
                tuning,
                ..TrainConfig::unet(bands, adapter, loss)
            },
            other => return Err(Error::Config(format!("unknown model `{other}` (expected toy-vit or unet)"))),
        };
        c.seed = seed;
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        if let Some(lr) = self.lr {
            c.lr = lr;
        }
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        c.augment = self.augment;
        Ok(c)
    }

    /// Every combination of the listed bands, adapters and tunings.
    fn configs(&self, seed: u64) -> Result<Vec<TrainConfig>> {
        let mut out = Vec::new();
        for b in &self.bands {
            for a in &self.adapters {
                for t in &self.tunings {
                    out.push(self.config(b, a, t, seed)?);
                }
            }
        }
        Ok(out)
    }

    fn single(&self, seed: u64) -> Result<TrainConfig> {
        if self.bands.len() != 1 || self.adapters.len() != 1 || self.tunings.len() != 1 {
            return Err(Error::Config("expected exactly one band configuration, adapter and tuning".into()));
        }
        self.config(&self.bands[0], &self.adapters[0], &self.tunings[0], seed)
    }
}

/// Preset name or path to a band configuration JSON file.
pub fn parse_bands(spec: &str) -> Result<BandConfig> {
    if let Some(b) = BandConfig::preset(spec) {
        return Ok(b);
    }
    let path = Path::new(spec);
    if path.is_file() {
        return read_json(path);
    }
    let names: Vec<String> = BandConfig::presets().into_iter().map(|b| b.name).collect();
    Err(Error::Config(format!("unknown band configuration `{spec}` (presets: {})", names.join(", "))))
}

/// Opens a corpus directory, taking the patch size from its first patch.
pub fn open_corpus(path: Option<&Path>) -> Result<Corpus> {
    let root = path.ok_or_else(|| Error::Config("--corpus is required".into()))?;
    let splits = SplitManifest::from_json_file(&root.join(SPLIT_MANIFEST_FILE))?;
    let first = splits
        .all_ids()
        .next()
        .ok_or_else(|| Error::Config(format!("{} lists no patches", root.display())))?;
    let (h, w, _) = read_patch(root, first)?.image.dim();
    Corpus::open_dir(
        root,
        CorpusOptions {
            patch_size: (h, w),
            ..Default::default()
        },
    )
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn first_seed(seeds: &[u64]) -> u64 {
    seeds.first().copied().unwrap_or(0)
}

fn prepare(args: &PrepareArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let root = args
        .corpus
        .clone()
        .or_else(|| file.corpus.clone())
        .ok_or_else(|| Error::Config("--corpus is required".into()))?;
    let seed = first_seed(&pick(&args.seed, &file.seeds, &[0]));
    if args.synthetic {
        let format = match args.format.as_str() {
            "raw" => PatchFormat::Raw,
            "hdf5" => PatchFormat::Hdf5,
            other => return Err(Error::Config(format!("unknown patch format `{other}`"))),
        };
        let mut spec = SyntheticSpec {
            size: args.size,
            seed,
            domain_shift: args.domain_shift,
            ..Default::default()
        };
        if !args.signal_bands.is_empty() {
            spec.signal_bands = args.signal_bands.clone();
        }
        let sizes = SplitSizes {
            train: args.train,
            val: args.val,
            test: args.test,
            generalizability: args.generalizability,
            external: args.external,
        };
        let name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "synthetic".into());
        synthetic_corpus(&name, &spec, sizes)?.write_to_dir(&root, format)?;
    }
    let corpus = open_corpus(Some(&root))?;
    let fractions = pick(&args.fractions, &file.fractions, &[]);
    let subsets = prepare_subsets(&corpus, &fractions, seed, Some(layout))?;
    let splits: serde_json::Map<String, serde_json::Value> =
        Split::ALL.iter().map(|s| (s.to_string(), json!(corpus.ids(*s).len()))).collect();
    print_json(&json!({
        "corpus": corpus.name(),
        "fingerprint": corpus.fingerprint(),
        "patch_size": corpus.patch_size(),
        "bands": corpus.bands().names().collect::<Vec<_>>(),
        "splits": splits,
        "subsets": subsets.iter().map(|(_, r)| r).collect::<Vec<_>>(),
    }))
}

fn select_bands(args: &SelectArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let corpus = open_corpus(args.corpus.as_deref().or(file.corpus.as_deref()))?;
    let seed = first_seed(&pick(&args.seed, &file.seeds, &[0]));
    let sample = sample_pixels(&corpus, Split::Train, args.per_image, seed)?;
    let report = estimate_mi(&sample, args.neighbors, seed)?;
    let config = top_k_config(&report, args.k, &format!("MI-{}", args.k))?;
    let dir = layout.root().join("bands");
    let report_path = dir.join("mi_report.json");
    let config_path = dir.join(format!("{}.json", config.name));
    write_json(&report_path, &report)?;
    write_json(&config_path, &config)?;
    print_json(&json!({
        "report": report,
        "band_config": config,
        "files": [report_path, config_path],
    }))
}

fn train_cmd(args: &RunArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let s = Settings::merge(args, file);
    let corpus = s.corpus()?;
    let mut runs = Vec::new();
    for &seed in &s.seeds {
        let config = s.single(seed)?;
        let options = TrainOptions {
            out: Some(layout.clone()),
            ..Default::default()
        };
        let run = train(&corpus, &config, &options)?;
        runs.push(json!({
            "run_id": run.record.run_id,
            "selected_epoch": run.record.selected_epoch,
            "evaluations": run.record.evaluations,
        }));
    }
    print_json(&runs)
}

fn evaluate_cmd(args: &EvaluateArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let record = layout.read_record(&args.run)?;
    layout.verify_record(&record)?;
    let ck = record
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::DanglingReference(format!("run `{}` has no checkpoint", record.run_id)))?;
    let (model, _) = SegModel::load(&layout.resolve(&ck.dir))?;
    let standardizer = Standardizer::read_json(&layout.standardizer_path(&record.run_id))?;
    if standardizer.fitted_on != record.standardizer {
        return Err(Error::DanglingReference(format!(
            "run `{}`: stored statistics differ from the recorded ones",
            record.run_id
        )));
    }
    let corpus = open_corpus(args.corpus.as_deref().or(file.corpus.as_deref()))?;
    let split: Split = args.split.parse()?;
    let eval = evaluate(&model, &corpus, split, &record.config.bands, &standardizer, record.config.threshold)?;
    let path = layout.run_dir(&record.run_id).join(format!("eval_{}_{}.json", corpus.name(), split));
    write_json(&path, &eval)?;
    print_json(&eval)
}

fn axis_sensor(args: &RunArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let s = Settings::merge(args, file);
    let corpus = s.corpus()?;
    let bands: Vec<BandConfig> = s.bands.iter().map(|b| parse_bands(b)).collect::<Result<_>>()?;
    let adapters: Vec<AdapterKind> = s.adapters.iter().map(|a| a.parse()).collect::<Result<_>>()?;
    let tunings: Vec<TuningStrategy> = s.tunings.iter().map(|t| t.parse()).collect::<Result<_>>()?;
    let base = s.config(&s.bands[0], "none", "full", first_seed(&s.seeds))?;
    let outcome = run_axis_sensor(&corpus, &base, &sensor_grid(&bands, &adapters, &tunings), Some(layout))?;
    write_json(&layout.axis_path("sensor"), &outcome)?;
    let tables = layout.tables_dir();
    std::fs::create_dir_all(&tables).map_err(|e| Error::io(&tables, e))?;
    let csv = tables.join("sensor.csv");
    std::fs::write(&csv, metrics_csv(&metric_rows(&outcome.runs))?).map_err(|e| Error::io(&csv, e))?;
    let skipped = tables.join("sensor_skipped.csv");
    std::fs::write(&skipped, skipped_csv(&outcome.skipped)?).map_err(|e| Error::io(&skipped, e))?;
    print_json(&json!({
        "runs": outcome.runs.iter().map(|r| &r.run_id).collect::<Vec<_>>(),
        "skipped": outcome.skipped,
        "table": csv,
    }))
}

fn axis_label(args: &RunArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let s = Settings::merge(args, file);
    let corpus = s.corpus()?;
    let seed = first_seed(&s.seeds);
    let models = s.configs(seed)?;
    let outcome = run_axis_label(&corpus, &models, &s.fractions, seed, Some(layout))?;
    write_json(&layout.axis_path("label"), &outcome)?;
    let tables = layout.tables_dir();
    std::fs::create_dir_all(&tables).map_err(|e| Error::io(&tables, e))?;
    let scores = tables.join("label_scores.csv");
    std::fs::write(&scores, label_scores_csv(&outcome)?).map_err(|e| Error::io(&scores, e))?;
    let de = tables.join("label_de.csv");
    std::fs::write(&de, label_de_csv(&outcome)?).map_err(|e| Error::io(&de, e))?;
    let figures = label_figures(&outcome, &layout.figures_dir())?;
    print_json(&json!({
        "subsets": outcome.subsets,
        "models": outcome.models,
        "tables": [scores, de],
        "figures": figures,
    }))
}

fn axis_domain(args: &DomainArgs, file: &RunFile, layout: &OutLayout) -> Result<()> {
    let s = Settings::merge(&args.run, file);
    let corpus = s.corpus()?;
    let gen = match args.gen_corpus.as_deref().or(file.gen_corpus.as_deref()) {
        Some(p) => open_corpus(Some(p))?,
        None => corpus.clone(),
    };
    let ext = open_corpus(Some(
        args.ext_corpus
            .as_deref()
            .or(file.ext_corpus.as_deref())
            .ok_or_else(|| Error::Config("--ext-corpus is required".into()))?,
    ))?;
    let targets = [
        DomainTarget {
            role: DomainRole::In,
            corpus: &corpus,
            split: args.in_split.parse()?,
        },
        DomainTarget {
            role: DomainRole::Gen,
            corpus: &gen,
            split: args.gen_split.parse()?,
        },
        DomainTarget {
            role: DomainRole::Ext,
            corpus: &ext,
            split: args.ext_split.parse()?,
        },
    ];
    let config = s.single(first_seed(&s.seeds))?;
    let outcome = run_axis_domain(&corpus, &config, &targets, Some(layout))?;
    let path = layout.axis_path("domain");
    let mut all: Vec<DomainOutcome> = if path.exists() { read_json(&path)? } else { Vec::new() };
    all.retain(|o| o.model != outcome.model);
    all.push(outcome.clone());
    all.sort_by(|a, b| a.model.cmp(&b.model));
    write_json(&path, &all)?;
    print_json(&outcome)
}

fn report(args: &ReportArgs, layout: &OutLayout) -> Result<()> {
    let runs = (!args.run.is_empty()).then_some(args.run.as_slice());
    let bundle = render_report(layout, runs)?;
    print_json(&bundle.files)
}

fn out_root(flag: Option<&Path>, file: &RunFile) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag
            .map(Path::to_path_buf)
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => RunFile::read(path)?,
        None => RunFile::default(),
    };
    let layout = OutLayout::new(out_root(cli.out.as_deref(), &file));
    match &cli.command {
        Command::Prepare(a) => prepare(a, &file, &layout),
        Command::SelectBands(a) => select_bands(a, &file, &layout),
        Command::Train(a) => train_cmd(a, &file, &layout),
        Command::Evaluate(a) => evaluate_cmd(a, &file, &layout),
        Command::AxisSensor(a) => axis_sensor(a, &file, &layout),
        Command::AxisLabel(a) => axis_label(a, &file, &layout),
        Command::AxisDomain(a) => axis_domain(a, &file, &layout),
        Command::Report(a) => report(a, &layout),
    }
}

/// Parses `args` and runs the command; returns the process exit code
/// (0 success, 2 usage or configuration error, 3 divergence, 1 otherwise).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
