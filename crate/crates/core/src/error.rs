use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // numerics
    #[error("matrix is not symmetric positive definite (pivot {pivot} = {value:e})")]
    NotSpd { pivot: usize, value: f64 },
    #[error("shrinkage-regularized covariance is not positive definite (pivot {pivot} = {value:e}); epsilon too small or covariance corrupted")]
    RegularizedNotSpd { pivot: usize, value: f64 },
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("shrinkage epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),

    // shared shape / label checks
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("no classes have been observed yet")]
    NoClassesSeen,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty feature bank")]
    EmptyBank,

    // orderings
    #[error("ordering {0} requires instance_id and frame_index metadata")]
    MissingMetadata(&'static str),
    #[error("{what} ({requested}) exceeds what the bank provides ({available})")]
    SpecTooLarge {
        what: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("invalid stream plan: {0}")]
    InvalidPlan(String),
    #[error("bad plan manifest: {0}")]
    BadManifest(String),

    // evaluation
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("offline accuracy at evaluation point {index} is {value}, must be > 0")]
    ZeroOffline { index: usize, value: f64 },

    // dataio
    #[error("bad magic bytes {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u8),
    #[error("payload truncated at byte offset {offset} (needed {needed} more bytes)")]
    TruncatedPayload { offset: usize, needed: usize },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingData(usize),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    UnparsableNumber {
        line: u64,
        column: String,
        value: String,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("invalid bank: {0}")]
    InvalidBank(String),

    // experiment runner
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
