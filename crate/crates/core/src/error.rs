use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the identification toolkit.
///
/// Numeric payloads are stored as `f64` regardless of the scalar type in use so the
/// error type stays non-generic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("parameter {index} = {value} lies outside its bounds [{lo}, {hi}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("model produced a non-finite value at time index {time_index}")]
    NonFiniteResponse { time_index: usize },

    #[error("model has no partly-linear basis")]
    MissingBasis,

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid sampling schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter split: {0}")]
    InvalidSplit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("data schedule does not match the reference schedule")]
    ScheduleMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("every grid node failed to evaluate")]
    AllNodesFailed,

    #[error("{value} lies outside the sampled range [{lo}, {hi}]")]
    OutsideSampledRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid simplex: {0}")]
    InvalidSimplex(String),

    #[error("degenerate simplex: secant residual matrix has rank {rank}, {required} required")]
    DegenerateSimplex { rank: usize, required: usize },

    #[error("solver failed after {iterations} iterations ({reason}); best merit {best_merit}")]
    SolverFailure {
        reason: String,
        best: Vec<f64>,
        best_merit: f64,
        iterations: usize,
        evaluations: usize,
    },
}
