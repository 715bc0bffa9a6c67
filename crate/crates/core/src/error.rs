use thiserror::Error;

/// Errors raised by the filters, the mixture fit and the benchmark harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("matrix `{matrix}` is numerically singular (condition number {condition:.3e})")]
    Singular {
        matrix: &'static str,
        condition: f64,
    },

    #[error("non-finite value in `{quantity}` at fixed-point iteration {iteration}")]
    Divergence {
        quantity: &'static str,
        iteration: usize,
    },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("mixture fit collapsed onto a single component")]
    DegenerateFit,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
