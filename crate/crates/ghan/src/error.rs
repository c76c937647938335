//! Crate-wide error type.

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, GhanError>;

#[derive(Debug, Error)]
pub enum GhanError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("index {index} out of range in {what} (len {len})")]
    IndexOutOfRange {
        what: String,
        index: usize,
        len: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    MalformedRecord {
        path: String,
        line: u64,
        message: String,
    },

    #[error("duplicate date {date} for ticker {ticker}")]
    DuplicateDate { ticker: String, date: NaiveDate },

    #[error("unknown sentiment label `{0}` (expected negative|neutral|positive)")]
    UnknownSentiment(String),

    #[error("embedding `{id}` has dimension {got}, expected {expected}")]
    EmbeddingDimension {
        id: String,
        got: usize,
        expected: usize,
    },

    #[error("embedding id `{0}` not found in the embedding store")]
    MissingEmbedding(String),

    #[error("feature `{0}` has zero variance over the training range")]
    ZeroVariance(String),

    #[error("empty stock universe")]
    EmptyUniverse,

    #[error("unknown feature group `{0}`")]
    UnknownGroup(String),

    #[error("{0} groups exceed the exact-enumeration limit of 20; use sampled mode")]
    TooManyGroups(usize),

    #[error("Sharpe ratio undefined: return series has zero variance")]
    ZeroVarianceSharpe,

    #[error("missing realized return for {ticker} on {date}")]
    MissingReturn { ticker: String, date: NaiveDate },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint/dataset mismatch: {0}")]
    ConfigMismatch(String),

    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    TomlParse(#[from] toml::de::Error),
}

impl GhanError {
    /// Stable machine-parsable code for CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            GhanError::ShapeMismatch { .. } => "shape-mismatch",
            GhanError::IndexOutOfRange { .. } => "index-out-of-range",
            GhanError::EmptyInput(_) => "empty-input",
            GhanError::InvalidArgument(_) => "invalid-argument",
            GhanError::MalformedRecord { .. } => "malformed-record",
            GhanError::DuplicateDate { .. } => "duplicate-date",
            GhanError::UnknownSentiment(_) => "unknown-sentiment",
            GhanError::EmbeddingDimension { .. } => "embedding-dimension",
            GhanError::MissingEmbedding(_) => "missing-embedding",
            GhanError::ZeroVariance(_) => "zero-variance",
            GhanError::EmptyUniverse => "empty-universe",
            GhanError::UnknownGroup(_) => "unknown-group",
            GhanError::TooManyGroups(_) => "too-many-groups",
            GhanError::ZeroVarianceSharpe => "zero-variance-sharpe",
            GhanError::MissingReturn { .. } => "missing-return",
            GhanError::Diverged(_) => "diverged",
            GhanError::ConfigMismatch(_) => "config-mismatch",
            GhanError::BadCheckpoint(_) => "bad-checkpoint",
            GhanError::Io(_) => "io",
            GhanError::Csv(_) => "csv",
            GhanError::Json(_) => "json",
            GhanError::TomlParse(_) => "toml",
        }
    }
}
