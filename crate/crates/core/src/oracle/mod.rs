//! Support-family machinery: mean gradients, gradient variance, the Gram frame
//! bound, the ε-approximate gradient oracle and the noninformative set Q.

mod family;
mod gradients;
mod gram;
mod query;

use thiserror::Error;

use crate::majority::MajorityError;

pub use family::{cyclic_shift, shift_automorphism, FamilyMode, ShiftReport, SupportFamily, DEFAULT_FAMILY_CAP};
pub use gradients::{gradient_variance, mean_gradient, Estimate, GradientSummary, OracleContext};
pub use gram::{frame_sides, gram_matrix, lambda_max, partial_frame_check, FrameCheck, DEFAULT_EIGEN_TOL, GRAM_SIZE_LIMIT};
pub use query::{
    compute_q, descend, linf_error, oracle_query, q_from_max_deviations, q_probability_bound, respond, run_mean_trajectory,
    run_mean_trajectory_with, select_branch, Branch, OracleConfig, OracleDirection, QBound, TrajectoryRecord, TrajectoryStep,
    LINF_DIMENSION_LIMIT,
};

pub use crate::harness::bounds::variance_bound;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid support family: {0}")]
    InvalidFamily(String),
    #[error("family of {needed} supports exceeds the enumeration cap {cap}; use a sampled family")]
    CapExceeded { needed: String, cap: u64 },
    #[error("family of {size} supports exceeds the dense Gram limit {limit}")]
    SizeExceeded { size: usize, limit: usize },
    #[error("input set is empty")]
    EmptyInputs,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("epsilon must be a nonnegative number, got {0}")]
    InvalidEpsilon(f64),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("trajectory was recorded without per-support deviations")]
    MissingDeviations,
    #[error(transparent)]
    Majority(#[from] MajorityError),
}
