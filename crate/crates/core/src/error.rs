use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quadrature rule has no nodes")]
    EmptyRule,
    #[error("quadrature is limited to dimension {max}, got {got}")]
    DimensionTooLarge { max: usize, got: usize },
    #[error("no closed form available for the {family} family")]
    NoClosedForm { family: &'static str },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("tail probability {estimate:e} is below Monte Carlo resolution 1/{samples}; method=exact required")]
    BelowResolution { estimate: f64, samples: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Returns `x` if finite, otherwise a `NonFinite` error tagged with `context`.
pub(crate) fn finite(x: f64, context: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { context })
    }
}
