use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum SgmError {
    /// Caller violated a precondition (shapes, index sets, parameter ranges).
    #[error("usage error: {0}")]
    Usage(String),

    /// A model or mixture has no usable mass (zero total weight, zero normalizer).
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// A statistic became NaN/Inf or otherwise left its valid range during training.
    #[error("numerical abort at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// A variable was used with a tape that did not record it.
    #[error("variable is not recorded on this tape")]
    ForeignVariable,

    /// Reference integration could not produce a trustworthy value.
    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for SgmError {
    fn from(e: serde_json::Error) -> Self {
        SgmError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SgmError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(SgmError::Usage(msg.into()))
}
