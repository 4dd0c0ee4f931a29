use thiserror::Error;

/// Errors raised across the simulator and certificate evaluators.
#[derive(Debug, Error)]
pub enum DgdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("wrong theorem for this schedule: {0}")]
    WrongTheorem(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("estimate unavailable: {0}")]
    EstimateUnavailable(String),

    #[error("iterate became non-finite at t={t}")]
    NonFinite { t: usize },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DgdError>;

impl DgdError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        DgdError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        DgdError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that stem from rejected inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, DgdError::Io(_) | DgdError::NonFinite { .. })
    }
}
