use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and a model) have incompatible shapes.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    /// A value became non-finite, or a normalization hit a zero vector.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An index (label, sample id, key id) is outside its valid range.
    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    /// A scalar argument is outside its documented range.
    #[error("value out of range: {0}")]
    Range(String),

    /// An input violates a documented precondition (unit norm, normalization, PD).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An operation was invoked in the wrong lifecycle state.
    #[error("invalid state: {0}")]
    State(String),

    /// Not enough (or unusable) data for the requested operation.
    #[error("data error: {0}")]
    Data(String),

    /// The input is degenerate (rank zero, constant).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed text input; `line` is 1-based.
    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    /// Invalid configuration value or key.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Training produced a non-finite loss; carries the last checkpoint written, if any.
    #[error("non-finite loss at epoch {epoch}, step {step} (last good checkpoint: {})",
        last_checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    Diverged {
        epoch: usize,
        step: usize,
        last_checkpoint: Option<PathBuf>,
    },
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Range(_) | Error::Parse { .. } | Error::Contract(_)
        )
    }
}
