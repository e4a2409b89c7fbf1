//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was called in a state it does not support,
    /// e.g. backward with a cache that does not match the network.
    #[error("invalid state: {0}")]
    State(String),

    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An experiment configuration failed validation. Maps to exit code 1.
    #[error("invalid config: {0}")]
    Config(String),

    /// A dataset file could not be parsed.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical failure (NaN/Inf) was detected; the message names the
    /// offending quantity.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Training loss became non-finite. Carries a reference to the last
    /// good checkpoint when one was written.
    #[error("training diverged at epoch {epoch}, step {step}; last checkpoint: {}",
            last_checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    Diverged {
        epoch: usize,
        step: usize,
        last_checkpoint: Option<PathBuf>,
    },

    /// Expected run artifacts are absent.
    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingArtifacts(Vec<PathBuf>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for configuration problems, 2 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
