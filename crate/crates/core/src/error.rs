use alloc::string::String;

/// Errors raised by the analytical models, the optimizer and the simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid call: {0}")]
    InvalidCall(String),

    /// `u * L >= 1`: the moment generating function of the burst size diverges.
    #[error("divergent arrival moment: u*L = {product} is not below 1")]
    DivergentMoment { product: f64 },

    #[error("infeasible delay bound: D_max = {d_max_s} s is shorter than one slot ({slot_s} s)")]
    InfeasibleDelay { d_max_s: f64, slot_s: f64 },

    #[error("quadrature did not converge on [{lower}, {upper}]: estimate {estimate}, error {error_estimate} after {subintervals} subintervals")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error_estimate: f64,
        subintervals: usize,
    },

    /// The closed-form expression left its domain (log of a non-positive number, NaN).
    #[error("formula domain error: {0}")]
    FormulaDomain(String),

    #[error("queue is not stable: mean arrival rate {arrival_bps} b/s is not below the mean service rate {service_bps} b/s")]
    StabilityInfeasible { arrival_bps: f64, service_bps: f64 },

    #[error("invalid energy model: {0}")]
    InvalidModel(String),

    #[error("line search failed for user {user}: {reason}")]
    LineSearch { user: usize, reason: String },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
