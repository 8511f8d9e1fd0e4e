use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // corpus and data handling
    #[error("patch `{0}` is listed in the split manifest but no container was found")]
    MissingPatch(String),
    #[error("patch `{id}` does not match the corpus schema: {detail}")]
    CorpusSchema { id: String, detail: String },
    #[error("patch `{id}` has mask value {value}; only 0 (background) and 1 (landslide) are allowed")]
    LabelDomain { id: String, value: u8 },
    #[error("split `{0}` is empty")]
    EmptySplit(String),
    #[error("patch id `{id}` appears in both `{first}` and `{second}` splits")]
    SplitOverlap {
        id: String,
        first: String,
        second: String,
    },
    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelCount { expected: usize, actual: usize },
    #[error("channel `{0}` is not present in the band manifest")]
    ChannelNotFound(String),
    #[error("invalid band manifest: {0}")]
    BandManifest(String),
    #[error("label fraction {0} is outside (0, 100]")]
    Fraction(f64),
    #[error("leakage guard: {0}")]
    Leakage(String),
    #[error("cannot draw {requested} pixels per image from {available} available")]
    SampleSize { requested: usize, available: usize },

    // band selection
    #[error("labels contain a single class; mutual information is undefined")]
    DegenerateLabel,

    // model
    #[error("adapter bypass requires exactly 6 input bands, got {0}")]
    AdapterBypass(usize),
    #[error("spatial size {height}x{width} is not divisible by patch size {patch}")]
    PatchGrid {
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("decoder with {stages} upsampling stages cannot invert patch size {patch}")]
    UpsampleConfig { stages: usize, patch: usize },
    #[error("mask ratio {0} must lie strictly between 0 and 1")]
    MaskRatio(f64),
    #[error("the reference baseline has no pretrained backbone and cannot be trained frozen")]
    BaselineTuning,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    // losses
    #[error("invalid loss weight: {0}")]
    Weight(String),
    #[error("probabilities deviate from a unit sum by {0:e}")]
    Probability(f64),

    // metrics
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("confusion matrix is empty")]
    EmptyEvaluation,
    #[error("efficiency scores do not contain the 100% baseline")]
    MissingBaseline,
    #[error("ratio undefined: {0}")]
    RatioDomain(String),

    // harness
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("models were trained on different subsets for k={k}")]
    SharedSubset { k: f64 },
    #[error("band manifest of `{target}` does not match the training corpus")]
    BandManifestMismatch { target: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[cfg(feature = "hdf5")]
    #[error(transparent)]
    Hdf5(#[from] hdf5_metno::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::DanglingReference(_) => 2,
            Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}
