use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent transition pair: {0}")]
    InconsistentTransitions(String),

    #[error("singular regime: {0}")]
    Singular(String),

    #[error("time step {dt:e} us too large for generator bound {bound:e}; use dt <= {suggested:e}")]
    StepSize { dt: f64, bound: f64, suggested: f64 },

    #[error("ill-conditioned fit: {0}")]
    IllConditionedFit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure during compute.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InconsistentTransitions(_)
                | Error::Empty(_)
                | Error::Json(_)
                | Error::StepSize { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
