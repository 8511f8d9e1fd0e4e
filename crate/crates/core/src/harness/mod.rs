//! Training runs and the experiment axes, with manifest-based provenance.

mod axes;
mod config;
mod evaluate;
mod layout;
mod train;

pub use axes::{
    evaluate_transfer, model_label, prepare_subsets, run_axis_domain, run_axis_label, run_axis_sensor, sensor_grid,
    DomainOutcome, DomainRole, DomainTarget, LabelOutcome, ModelEfficiency, SensorCell, SensorOutcome, SkippedCell,
};
pub use config::TrainConfig;
pub use evaluate::{check_standardizer, evaluate, load_patches, score_patches, SplitEval, EVAL_BATCH};
pub use layout::{read_json, write_json, OutLayout, RunMetrics, METRICS_FILE, RECORD_FILE, STANDARDIZER_FILE};
pub use train::{train, CheckpointRef, CheckpointSelection, CorpusRef, RunRecord, SubsetRef, TrainOptions, TrainedRun};
