use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input to {op}: {value}")]
    NonFinite { op: &'static str, value: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid quadrature spec: {0}")]
    InvalidQuadrature(String),

    #[error("quadrature dimension must be 1, 2 or 3 (got {0})")]
    Dimension(usize),

    #[error("selected index {selected} inconsistent with stage-1 means ({xbar1}, {xbar2})")]
    InconsistentSelection {
        selected: u8,
        xbar1: f64,
        xbar2: f64,
    },

    #[error("unknown estimator tag `{0}`")]
    UnknownEstimator(String),

    #[error("quadrature did not converge: doubling nodes moved {quantity} by {shift:e}")]
    NonConvergence { quantity: &'static str, shift: f64 },

    #[error("selection probability of arm {arm} is {probability:e}; conditional moments undefined")]
    VanishingSelection { arm: u8, probability: f64 },

    #[error("invalid sweep configuration: {0}")]
    InvalidSweep(String),

    #[error("invalid prior scale m = {0}")]
    InvalidPrior(f64),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(op: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { op, value })
    }
}
