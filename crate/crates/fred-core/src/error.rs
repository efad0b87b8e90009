//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum FredError {
    /// Input data violated a precondition (non-finite values, bad labels, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor or mask shapes do not line up.
    #[error("shape error: {0}")]
    ShapeError(String),

    /// Not enough samples to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Budget parameters out of range (k > d, zero instances, ...).
    #[error("invalid budget: {0}")]
    InvalidBudget(String),

    /// A synthetic memory is internally inconsistent.
    #[error("corrupt memory: {0}")]
    CorruptMemory(String),

    /// A container or dataset file failed to parse; `offset` is the byte
    /// position at which the problem was detected.
    #[error("format error at byte {offset}: {message}")]
    FormatError { offset: u64, message: String },

    /// The distillation loss became non-finite at `iteration`.
    #[error("divergence at iteration {iteration}: loss is not finite")]
    Divergence { iteration: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FredError>;

impl FredError {
    pub fn format_at(offset: u64, message: impl Into<String>) -> Self {
        FredError::FormatError {
            offset,
            message: message.into(),
        }
    }
}
