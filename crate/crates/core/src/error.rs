use thiserror::Error;

/// Errors raised by the numerical core and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies outside the compact set")]
    OutsideDomain,

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection budget of {0} proposals exhausted")]
    RejectionBudget(usize),

    #[error("Gram matrix numerically singular (condition estimate {0:e})")]
    SingularGram(f64),

    #[error("Cholesky factorization failed")]
    Cholesky,

    #[error("configuration is singular for this basis")]
    SingularConfiguration,

    #[error("mismatched provenance: {0}")]
    Provenance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical linear algebra (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularGram(_) | Error::Cholesky | Error::SingularConfiguration
        )
    }
}
