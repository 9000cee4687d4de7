use thiserror::Error;

use crate::psa::PsaSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable parameters: lambda = {lambda}, a = {a}, load = {rho} (need lambda < 2a(1-a))")]
    Unstable { lambda: f64, a: f64, rho: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("no sign change of the kernel on [{lo:e}, {hi:e}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations (last relative change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    /// The last iterate is kept so callers can still inspect where the series went.
    #[error("power series diverged after {iterations} iterations (last relative change {last_change:e})")]
    Diverged {
        iterations: usize,
        last_change: f64,
        last: Box<PsaSolution>,
    },

    #[error("chain is reducible: the origin cannot be reached from state {0:?}")]
    Reducible((usize, usize)),

    #[error("grid is not normalized (total mass {0})")]
    Unnormalized(f64),

    #[error("correlation undefined: queue length has zero variance")]
    ZeroVariance,

    #[error("lambda = {0} >= 1/2: no transmission probability stabilizes the system")]
    EmptyStabilityRegion(f64),
}

impl Error {
    pub fn is_stability(&self) -> bool {
        matches!(self, Error::Unstable { .. } | Error::EmptyStabilityRegion(_))
    }

    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Unsupported(_) | Error::Config(_)
        )
    }
}
