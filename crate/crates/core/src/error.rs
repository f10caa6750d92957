use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ground space: {0}")]
    InvalidSpace(String),

    #[error("index {index} out of range for a space of {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("output subset is empty")]
    EmptyOutputSubset,

    #[error("cosine distance is undefined for the zero vector at index {0}")]
    ZeroVector(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("LDP polytope is empty: need e^(-eps/2)*sum(m) <= 1 <= e^(eps/2)*sum(m), got sum(m) = {mass}, eps = {epsilon}")]
    InfeasiblePolytope { mass: f64, epsilon: f64 },

    #[error("base measure mass {mass} outside [{lower}, {upper}]")]
    MassOutOfRange { mass: f64, lower: f64, upper: f64 },

    #[error("Gibbs kernel underflow at lambda = {lambda}: {detail}; use the log-domain mode")]
    KernelUnderflow { lambda: f64, detail: String },

    #[error("vector entry {index} must be strictly positive, got {value}")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("min-cost flow failed: {0}")]
    Flow(String),

    #[error("quadrature did not reach tolerance: estimated error {estimate:e} > {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("exponential mechanism sensitivity must be positive")]
    ZeroSensitivity,

    #[error("mechanism returned an invalid output for input {input}: {reason}")]
    MechanismOutput { input: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
