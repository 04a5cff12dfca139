//! The Gram matrix of a support family and the partial-frame inequality
//! `Σ_S ⟨f, h_S⟩_n² ≤ λ_max(G)·‖f‖_n²`.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::majority::{Predictor, SignVector};
use crate::rng::stream_rng;

use super::{OracleContext, OracleError};

/// Largest family for which a dense Gram matrix is built.
pub const GRAM_SIZE_LIMIT: usize = 4096;

pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;

const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// `G_{ST} = ⟨h_S, h_T⟩_n` over the context's inputs.
pub fn gram_matrix(ctx: &OracleContext) -> Result<Array2<f64>, OracleError> {
    let size = ctx.family().len();
    if size > GRAM_SIZE_LIMIT {
        return Err(OracleError::SizeExceeded { size, limit: GRAM_SIZE_LIMIT });
    }
    let h = ctx.label_matrix();
    Ok(h.dot(&h.t()) / ctx.n() as f64)
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, stopping once the Rayleigh quotient changes by at most `tol`
/// relative to its size.
///
/// The start vector is all-ones plus a small fixed pseudo-random perturbation;
/// the plain all-ones vector can be orthogonal to the top eigenvector (e.g.
/// for `[[1,−1],[−1,1]]`).
pub fn lambda_max(g: &Array2<f64>, tol: f64) -> Result<f64, OracleError> {
    let size = g.nrows();
    if size == 0 || g.ncols() != size {
        return Err(OracleError::InvalidMatrix(format!("expected a nonempty square matrix, got {:?}", g.dim())));
    }
    let mut rng = stream_rng(0, 0x6772_616d, 0);
    let mut v: Array1<f64> = (0..size).map(|_| 1.0 + 0.5 * rng.random_range(-1.0..1.0)).collect();
    v /= norm(&v);
    let mut lambda = 0.0f64;
    for _ in 0..MAX_POWER_ITERATIONS {
        let w = g.dot(&v);
        let next = v.dot(&w);
        let size_w = norm(&w);
        if size_w == 0.0 {
            return Ok(0.0);
        }
        v = w / size_w;
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        lambda = next;
    }
    Err(OracleError::NoConvergence(MAX_POWER_ITERATIONS))
}

/// Both sides of the partial-frame inequality for predictor `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lambda_max: f64,
}

impl FrameCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-9) + 1e-12
    }
}

pub fn partial_frame_check(ctx: &OracleContext, f: &dyn Predictor) -> Result<FrameCheck, OracleError> {
    let g = gram_matrix(ctx)?;
    let lambda = lambda_max(&g, DEFAULT_EIGEN_TOL)?;
    Ok(frame_sides(ctx, f, lambda))
}

/// Frame sides with a precomputed `λ_max`, for checking many predictors.
pub fn frame_sides(ctx: &OracleContext, f: &dyn Predictor, lambda_max: f64) -> FrameCheck {
    let n = ctx.n() as f64;
    let values: Array1<f64> = ctx.inputs().iter().map(|x: &SignVector| f.predict(x)).collect();
    let inner = ctx.label_matrix().dot(&values) / n;
    FrameCheck {
        lhs: inner.dot(&inner),
        rhs: lambda_max * values.dot(&values) / n,
        lambda_max,
    }
}
