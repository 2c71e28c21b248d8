use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rating {stars} outside scale {min}..={max}")]
    RatingOutOfRange { stars: i32, min: i32, max: i32 },

    #[error("invalid rating scale {min}..={max}")]
    InvalidScale { min: i32, max: i32 },

    #[error("feature value is empty after normalization")]
    EmptyFeature,

    #[error("unknown relation `{0}` (expected hasIngredient or hasTag)")]
    UnknownRelation(String),

    #[error("degenerate feature pair: given and bias are both `{0}`")]
    DegeneratePair(String),

    #[error("bias score undefined: no item contains `{0}`")]
    UndefinedScore(String),

    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    #[error("tuning failed: {skipped} of {total} steps skipped on backend errors")]
    TuningFailed { skipped: usize, total: usize },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Short category tag used in CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::RatingOutOfRange { .. }
            | Error::InvalidScale { .. }
            | Error::EmptyFeature
            | Error::UnknownRelation(_)
            | Error::DegeneratePair(_)
            | Error::DuplicateItem(_) => "invalid-input",
            Error::UndefinedScore(_) => "undefined-score",
            Error::Config(_) => "config",
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => "parse",
            Error::NotFound(_) => "not-found",
            Error::Inconsistent(_) | Error::ContractViolation(_) => "internal",
            Error::TuningFailed { .. } => "tuning",
            Error::Backend(_) => "backend",
            Error::Io { .. } => "io",
        }
    }
}
