use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
///
/// [`Error::is_config`] separates configuration mistakes (bad flag values,
/// inconsistent hyperparameters) from problems with the input data; the CLI
/// maps the two onto different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("duplicate word `{word}` (line {line})")]
    DuplicateWord { word: String, line: usize },

    #[error("dimension mismatch{context}: expected {expected}, got {got}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("entity `{0}` not found in corpus")]
    EntityNotFound(String),

    #[error("kernel system is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub fn dimension(expected: usize, got: usize, context: impl Into<String>) -> Self {
        let context = context.into();
        Error::DimensionMismatch {
            expected,
            got,
            context: if context.is_empty() {
                context
            } else {
                format!(" ({context})")
            },
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
