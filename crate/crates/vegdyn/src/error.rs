//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument was outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Model assembly failed; every offending entry is listed.
    #[error("model validation failed:\n{}", issues.join("\n"))]
    Validation { issues: Vec<String> },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("time {t} outside schedule range [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },

    /// Forward-Euler iterate left the probability simplex by more than the
    /// clip tolerance. The fix is almost always a smaller step.
    #[error(
        "probability went negative ({value:.3e} at node {node}, t = {t}); \
         reduce the time step h"
    )]
    PositivityViolation { node: usize, value: f64, t: f64 },

    #[error("eigen iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    EigenNoConvergence { residual: f64, iterations: usize },

    /// The event log hit its configured cap before `t_end`.
    #[error("event cap {cap} reached at t = {time_reached} (before t_end = {t_end})")]
    EventCapExceeded {
        cap: usize,
        time_reached: f64,
        t_end: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
