use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("unexpected field `{0}`")]
    UnexpectedField(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("probabilities sum to {0}")]
    ProbabilitySum(String),

    #[error("unknown task tag `{0}`")]
    UnknownTask(String),

    #[error("model kind `{kind}` is incompatible with {what}")]
    KindMismatch { kind: String, what: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("non-finite loss at epoch {epoch}; try a smaller learning rate")]
    Diverged { epoch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        Error::Line {
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, flags, shapes)
    /// rather than by a failure while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Line { source, .. } => source.is_validation(),
            Error::Diverged { .. } | Error::Io { .. } | Error::UndefinedCorrelation(_) => false,
            _ => true,
        }
    }
}
