//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The requested integral against `nu(dx) = x^{-2} Lambda(dx)` grows
    /// without bound near an endpoint (or at an atom where the integrand
    /// is infinite). Callers that expect this (e.g. the selection
    /// threshold) map it to `+inf`.
    #[error("integral diverges near {endpoint}")]
    DivergentIntegral { endpoint: &'static str },

    /// The integrand returned NaN at an interior evaluation point.
    #[error("integrand returned a non-finite value at x = {x:e}")]
    InvalidIntegrand { x: f64 },

    /// The operation is only defined for measures with no atom at zero.
    #[error("operation does not support a Kingman atom (Lambda({{0}}) = {mass} > 0)")]
    KingmanUnsupported { mass: f64 },

    /// A weighted measure used for sampling has zero or non-finite mass.
    #[error("weighted measure has zero or non-finite total mass")]
    ZeroMass,

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric overflow in {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
