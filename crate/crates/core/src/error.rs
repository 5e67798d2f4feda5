use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A line or document does not match the expected record layout.
    #[error("schema error at {path}:{line}: {reason}")]
    Schema {
        path: String,
        line: usize,
        reason: String,
    },

    /// Well-formed input that violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Caller broke a precondition (dimension mismatch, empty input, bad config).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("teacher transport error after {} attempt(s): {message}", attempts.len())]
    Transport {
        message: String,
        attempts: Vec<String>,
    },

    #[error("teacher generation error: {0}")]
    Generation(String),

    #[error("anchor {anchor_id}: {source}")]
    Anchor {
        anchor_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 validation, 2 runtime, 3 transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } | Error::Validation(_) | Error::Contract(_) | Error::Config(_) => 1,
            Error::Transport { .. } => 3,
            Error::Anchor { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
