use std::path::PathBuf;

/// Errors raised anywhere in the counting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("size limit exceeded: {what} = {value} exceeds cap {cap}")]
    SizeCap {
        what: &'static str,
        value: u64,
        cap: u64,
    },

    #[error("sinkhorn did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    OptimizerFailed { iterations: usize, grad_norm: f64 },

    #[error("dynamic programming state budget exceeded: {states} live states > budget {budget}")]
    BudgetExceeded { states: u64, budget: u64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("state file {path}: {reason}")]
    State { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
