use thiserror::Error;

/// Errors raised by the analytic engines, the pricer and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// Two stage rates collide, so the exponential-mixture representation
    /// does not exist (it would need polynomial-in-t terms).
    #[error("degenerate parameters: rate {first} = {first_value} collides with rate {second} = {second_value}")]
    DegenerateRates {
        first: String,
        first_value: f64,
        second: String,
        second_value: f64,
    },

    #[error(
        "quadrature did not converge on [{lower}, {upper}]: estimate {estimate}, error {error} > tolerance {tolerance}"
    )]
    QuadratureNonConvergence {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("k = {k} needs {dims} nested integrals, above the cap of {cap}; use the Monte Carlo engine")]
    NestingCap { k: usize, dims: usize, cap: usize },

    #[error("integrated-hazard inversion failed: target {target}, bracket [{lower}, {upper}], residual {residual}")]
    RootFinding {
        target: f64,
        lower: f64,
        upper: f64,
        residual: f64,
    },

    #[error("premium leg is not positive ({0}); the swap rate is undefined")]
    ZeroPremiumLeg(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, CdsError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CdsError {
    CdsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
