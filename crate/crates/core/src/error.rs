use thiserror::Error;

/// Errors raised by the model, likelihood, estimator and lower-bound routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("value {value} at index {index} lies outside the box [{x_min}, {x_max}]")]
    OutOfBox {
        index: usize,
        value: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("signal has {pieces} constant pieces, budget is {budget}")]
    BudgetExceeded { pieces: usize, budget: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance of look {look} is not positive definite")]
    NotPositiveDefinite { look: usize },

    #[error("normal matrix AᵀA of look {look} is singular")]
    SingularNormalMatrix { look: usize },

    #[error("search space of {count} candidates exceeds the cap of {cap}")]
    SearchSpaceTooLarge { count: u128, cap: u128 },

    #[error("at least two points are required, got {0}")]
    TooFewPoints(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable variant name, used in CSV error columns and CLI messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfBox { .. } => "OutOfBox",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::InvalidDims(_) => "InvalidDims",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::SingularNormalMatrix { .. } => "SingularNormalMatrix",
            Error::SearchSpaceTooLarge { .. } => "SearchSpaceTooLarge",
            Error::TooFewPoints(_) => "TooFewPoints",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
