use thiserror::Error;

/// Errors produced by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("curve has zero length; constant curves have no constant-speed representative")]
    ConstantCurve,

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("exponent must satisfy p > 1 (got {0})")]
    InvalidExponent(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no barycenter in L^q: mass {mass:e} sits on point {point} where the reference measure vanishes")]
    NoBarycenter { point: usize, mass: f64 },

    #[error("solver did not converge after {iterations} iterations (last relative gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("certificate failed: {0}")]
    CertificateFailed(String),

    #[error("instance error: {0}")]
    Instance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed instance document: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 invalid input, 3 non-convergence, 4 failed certificate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. } => 3,
            Error::CertificateFailed(_) => 4,
            _ => 2,
        }
    }
}
