use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Cholesky factorization failed even with the latent jitter applied.
    #[error("{what} is not positive definite (latent jitter {jitter:e})")]
    Factorization { what: &'static str, jitter: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, GpError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GpError::DimensionMismatch { expected, found })
    }
}
