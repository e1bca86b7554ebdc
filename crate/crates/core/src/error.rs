use std::io;

/// Errors raised across the toolkit.
///
/// Display strings are stable: the CLI prints them verbatim and tests match on them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a DAS trial file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("length mismatch: header expects {expected} payload bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("non-finite sample at row {row}, channel {channel}")]
    NonFiniteSample { row: usize, channel: usize },
    #[error("segment outside record")]
    SegmentOutsideRecord,
    #[error("record too short: {samples} samples, window needs {window}")]
    RecordTooShort { samples: usize, window: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("empty band")]
    EmptyBand,
    #[error("incompatible spectrograms: {0}")]
    IncompatibleSpectrograms(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate target")]
    DegenerateTarget,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid nu {0}: must lie in (0, 1]")]
    InvalidNu(f64),
    #[error("invalid gamma {0}: must be positive")]
    InvalidGamma(f64),
    #[error("solver did not converge after {iterations} iterations (KKT violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },
    #[error("missing training trial for group {0}")]
    MissingTrainingTrial(String),
    #[error("inconsistent baseline: {0}")]
    InconsistentBaseline(String),
    #[error("wrong section: model is for {expected}, trial {trial_id} belongs to {found}")]
    WrongSection {
        expected: String,
        found: String,
        trial_id: String,
    },
    #[error("undefined correlation: constant input")]
    UndefinedCorrelation,
    #[error("empty sample")]
    EmptySample,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
