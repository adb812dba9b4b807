use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable model: arrival rate {arrival} must be below service rate {service}")]
    UnstableModel { arrival: f64, service: f64 },

    #[error("kernel is not contractive on average (rho upper bound {rho_upper})")]
    NotContractive { rho_upper: f64 },

    #[error("no unique stationary distribution: {0}")]
    NoUniqueStationary(String),

    #[error("solver failure: {reason} (states {states:?})")]
    SolverFailure { reason: String, states: Vec<usize> },

    #[error("series did not converge after {terms} terms (last term sup-norm {last_term})")]
    SeriesDiverged { terms: usize, last_term: f64 },

    #[error("series needs {needed} terms, budget is {cap}")]
    SeriesBudgetExceeded { needed: usize, cap: usize },

    #[error("certification failed: {what} at {location} (value {value})")]
    CertificationFailed {
        what: String,
        location: f64,
        value: f64,
    },

    #[error("minorizing law is not absolutely continuous w.r.t. P_x at x={x}, y={y}")]
    MinorizationUnsupported { x: f64, y: f64 },

    #[error("minorization violated at x={x}, y={y}: residual CDF value {value}")]
    MinorizationViolated { x: f64, y: f64, value: f64 },

    #[error("regeneration cycle exceeded {cap} steps")]
    CycleOverflow { cap: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
