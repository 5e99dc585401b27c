use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("{field} = {value} is out of range: {reason}")]
    Domain {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("state violates the uncertainty bound: vx*vy - cxy^2 = {determinant} < 1/16")]
    Unphysical { determinant: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: need at least {required} samples, got {got}")]
    InsufficientData { required: usize, got: usize },

    #[error("trace channels differ in length ({ch1} vs {ch2})")]
    LengthMismatch { ch1: usize, ch2: usize },

    #[error("trace contains a non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    /// The covariance inversion produced a nonpositive variance.
    #[error("covariance {covariance} implies a nonpositive quadrature variance (snl = {snl})")]
    OutOfRange { covariance: f64, snl: f64 },
}

impl Error {
    pub(crate) fn domain(field: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            field,
            value,
            reason,
        }
    }
}
