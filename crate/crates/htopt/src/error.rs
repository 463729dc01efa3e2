//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HtoptError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("oracle failure for agent {agent}: {cause}")]
    Oracle { agent: usize, cause: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HtoptError>;
