use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value outside the mathematical domain of an operation (negative
    /// mass, marginal not summing to one, parameter out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An internal guarantee was broken. Always a bug or corrupted input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("certification failed: {reason} (residual {residual_norm:e}, max reconstruction error {max_reconstruction_error:e})")]
    Certification {
        reason: String,
        residual_norm: f64,
        max_reconstruction_error: f64,
    },

    #[error("instance too large: n = {n} exceeds the cap of {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
