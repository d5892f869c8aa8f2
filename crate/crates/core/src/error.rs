use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. [`Error::code`] gives the stable
/// upper-case name used in CLI diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in `{id}` at column {column}")]
    NonFiniteValue { id: String, column: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid store: {0}")]
    InvalidStore(String),
    #[error("zero vector `{0}` cannot be L2-normalized")]
    ZeroVector(String),
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
    #[error("unknown relevance label `{label}` on line {line}")]
    UnknownLabel { label: String, line: usize },
    #[error("qrels reference unknown collection id `{0}`")]
    UnknownDocId(String),
    #[error("query `{0}` has no relevant items")]
    EmptyRelevantSet(String),
    #[error("unknown query id `{0}`")]
    UnknownQueryId(String),
    #[error("no detections recorded for query `{0}`")]
    MissingDetections(String),
    #[error("cannot fit {k} clusters to {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("class-head training needs at least 2 distinct labels, got {0}")]
    DegenerateLabels(usize),
    #[error("ranked list is empty")]
    EmptyList,
    #[error("{what} length mismatch: {left} vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("feature row has {got} columns, model expects {expected}")]
    NormalizationMismatch { expected: usize, got: usize },
    #[error("need at least {folds} queries for {folds} folds, got {n}")]
    TooFewQueries { n: usize, folds: usize },
    #[error("predictor `{predictor}` has no score for query `{query}`")]
    MissingScores { predictor: String, query: String },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::NonFiniteValue { .. } => "NON_FINITE_VALUE",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::InvalidStore(_) => "INVALID_STORE",
            Error::ZeroVector(_) => "ZERO_VECTOR",
            Error::Format { .. } => "FORMAT_ERROR",
            Error::UnknownLabel { .. } => "UNKNOWN_LABEL",
            Error::UnknownDocId(_) => "UNKNOWN_DOC_ID",
            Error::EmptyRelevantSet(_) => "EMPTY_RELEVANT_SET",
            Error::UnknownQueryId(_) => "UNKNOWN_QUERY_ID",
            Error::MissingDetections(_) => "MISSING_DETECTIONS",
            Error::KTooLarge { .. } => "K_TOO_LARGE",
            Error::DegenerateLabels(_) => "DEGENERATE_LABELS",
            Error::EmptyList => "EMPTY_LIST",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::NormalizationMismatch { .. } => "NORMALIZATION_MISMATCH",
            Error::TooFewQueries { .. } => "TOO_FEW_QUERIES",
            Error::MissingScores { .. } => "MISSING_SCORES",
            Error::InvalidRange(_) => "INVALID_RANGE",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Config(_) => "CONFIG_ERROR",
            Error::Io { .. } => "IO_ERROR",
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        match v {
            Violation::DimensionMismatch { expected, got, .. } => {
                Error::DimensionMismatch { expected, got }
            }
            Violation::NonFiniteValue { id, column } => Error::NonFiniteValue { id, column },
            Violation::DuplicateId(id) => Error::DuplicateId(id),
            Violation::EmptyIds => Error::InvalidStore("store has no ids".into()),
            Violation::ZeroDim => Error::InvalidStore("embedding dimension is zero".into()),
            Violation::EmptyId(i) => Error::InvalidStore(format!("id at position {i} is empty")),
        }
    }
}
