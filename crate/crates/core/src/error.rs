use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("matrix is not skew-adjoint for the metric (residual {residual:.3e})")]
    NotSkewAdjoint { residual: f64 },

    #[error("point is not a zero of the field (|v| = {norm:.3e})")]
    NotAZero { norm: f64 },

    #[error("zero is {found}, operation requires a {required} zero")]
    WrongZeroKind {
        found: &'static str,
        required: &'static str,
    },

    #[error("bracket parameter recovery failed (residual {residual:.3e})")]
    BracketRecovery { residual: f64 },

    #[error("direction is not admissible: {0}")]
    InadmissibleDirection(String),

    #[error("segment leaves the essential stratum at t = {t}")]
    LeavesStratum { t: f64 },

    #[error("no admissible section u with g(u, grad phi) = 1 at this point")]
    NoAdmissibleSection,

    #[error("well-definedness check failed: two admissible sections disagree by {0:.3e}")]
    SectionDisagreement(f64),

    #[error("sigma system residual {0:.3e} exceeds tolerance")]
    SigmaResidual(f64),

    #[error("no zeros found in the region")]
    NoZeros,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("witness does not transport the quintuple (residual {0:.3e})")]
    InvalidWitness(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
