use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Source line of a record in an input file, when there is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line(pub Option<u64>);

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, "line {line}: "),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{line}rating {rating} outside 1..={k}")]
    RatingOutOfRange { line: Line, rating: i64, k: u8 },

    #[error("{line}duplicate rating for user `{user}`, item `{item}`")]
    DuplicateRating { line: Line, user: String, item: String },

    #[error("missing content vector for item `{item}` in domain `{domain}`")]
    MissingContent { domain: String, item: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("cold start: {0}")]
    ColdStart(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Config,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
