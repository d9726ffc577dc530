use thiserror::Error;

/// Errors raised across the library. Messages are meant for diagnostics and CLI output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("divided difference order {0} exceeds the supported maximum of 3")]
    OrderTooHigh(usize),

    #[error("empty point set")]
    EmptyPoints,

    #[error("function `{name}` supplies derivatives up to order {available}, order {needed} required")]
    InsufficientDerivative {
        name: String,
        needed: usize,
        available: usize,
    },

    #[error("point or eigenvalue {point} lies within {tolerance:e} of pole {pole}")]
    Pole {
        point: String,
        pole: String,
        tolerance: f64,
    },

    #[error("function `{0}` is complex valued; use the complex entry point")]
    ComplexValued(String),

    #[error("singular matrix encountered in {0}")]
    Singular(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("exact enumeration needs {needed} states, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },

    #[error("covariance has eigenvalue {0:e} below the negative tolerance")]
    NegativeCovariance(f64),

    #[error("interpolation parameter t = {0} outside [0, 1]")]
    InvalidT(f64),

    #[error("invalid exponent p = {p}: {reason}")]
    InvalidP { p: f64, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
