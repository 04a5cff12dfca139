//! Differentiable models: the positional-attention transformer and a linear probe.
//!
//! Parameters are always a flat `&[f64]` so the oracle and harness code is
//! shared across model families. [`DifferentiableModel`] is the seam.

mod checkpoint;
mod linear;
mod transformer;

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::majority::{all_inputs, sample_inputs, LabeledDataset, MajorityError, Predictor, SignVector};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use linear::LinearProbe;
pub use transformer::{
    attention_blocks, attention_weights, forward, forward_stacked, grad_prediction, Forward,
    ModelConfig, RecursionMode, TransformerModel, TransformerParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("token index {m} outside the computed range [{lo}, {hi})")]
    IndexError { m: usize, lo: usize, hi: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("checkpoint parse error on line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Majority(#[from] MajorityError),
}

/// The link function `φ` with `φ(0) = −1`, `φ(±1) = 1`, `φ'(0) = φ'(±1) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Link {
    /// `φ(z) = −cos(πz)`.
    #[default]
    NegCos,
    /// `φ(z) = −1 + 4z² − 2z⁴`.
    Quartic,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::NegCos => "neg_cos",
            Link::Quartic => "quartic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "neg_cos" => Some(Link::NegCos),
            "quartic" => Some(Link::Quartic),
            _ => None,
        }
    }

    pub fn phi(self, z: f64) -> f64 {
        match self {
            Link::NegCos => -(std::f64::consts::PI * z).cos(),
            Link::Quartic => {
                let z2 = z * z;
                -1.0 + 4.0 * z2 - 2.0 * z2 * z2
            }
        }
    }

    pub fn phi_prime(self, z: f64) -> f64 {
        match self {
            Link::NegCos => std::f64::consts::PI * (std::f64::consts::PI * z).sin(),
            Link::Quartic => 8.0 * z - 8.0 * z * z * z,
        }
    }
}

/// A parametric model `f_θ: {±1}^d → ℝ` with an analytic parameter gradient.
pub trait DifferentiableModel: Sync {
    /// Input dimension `d`.
    fn input_dim(&self) -> usize;

    fn num_params(&self) -> usize;

    fn name(&self) -> &'static str;

    fn predict(&self, params: &[f64], x: &SignVector) -> f64;

    /// Writes `∇_θ f_θ(x)` into `grad` and returns `f_θ(x)`.
    fn predict_and_grad(&self, params: &[f64], x: &SignVector, grad: &mut [f64]) -> f64;
}

/// A model evaluated at fixed parameters.
pub struct BoundModel<'a, M: DifferentiableModel + ?Sized> {
    pub model: &'a M,
    pub params: Vec<f64>,
}

impl<'a, M: DifferentiableModel + ?Sized> BoundModel<'a, M> {
    pub fn new(model: &'a M, params: Vec<f64>) -> Self {
        Self { model, params }
    }

    pub fn gradient(&self, x: &SignVector) -> Vec<f64> {
        let mut g = vec![0.0; self.model.num_params()];
        self.model.predict_and_grad(&self.params, x, &mut g);
        g
    }
}

impl<M: DifferentiableModel + ?Sized> Predictor for BoundModel<'_, M> {
    fn predict(&self, x: &SignVector) -> f64 {
        self.model.predict(&self.params, x)
    }
}

/// Predictions and per-sample gradients (`n × P`) at one parameter point.
pub struct Jacobian {
    pub predictions: Vec<f64>,
    pub rows: Array2<f64>,
}

pub fn batch_jacobian<M: DifferentiableModel + ?Sized>(model: &M, params: &[f64], inputs: &[SignVector]) -> Jacobian {
    let p = model.num_params();
    let mut rows = Array2::<f64>::zeros((inputs.len(), p));
    let predictions: Vec<f64> = rows
        .outer_iter_mut()
        .into_par_iter()
        .zip(inputs.par_iter())
        .map(|(mut row, x)| {
            let slice = row.as_slice_mut().expect("standard layout");
            model.predict_and_grad(params, x, slice)
        })
        .collect();
    Jacobian { predictions, rows }
}

/// `(1/n) Σ (f_θ(x_i) − y_i) ∇f_θ(x_i)`, the gradient of the ½-scaled loss.
pub fn grad_loss_with_labels<M: DifferentiableModel + ?Sized>(
    model: &M,
    params: &[f64],
    inputs: &[SignVector],
    labels: &[f64],
) -> Vec<f64> {
    assert_eq!(inputs.len(), labels.len());
    let jac = batch_jacobian(model, params, inputs);
    let n = inputs.len() as f64;
    let residual: ndarray::Array1<f64> = jac
        .predictions
        .iter()
        .zip(labels)
        .map(|(f, y)| (f - y) / n)
        .collect();
    jac.rows.t().dot(&residual).to_vec()
}

/// Gradient of the empirical loss `L_{n,S}(θ)` on `data`.
pub fn grad_empirical_loss<M: DifferentiableModel + ?Sized>(model: &M, params: &[f64], data: &LabeledDataset) -> Vec<f64> {
    grad_loss_with_labels(model, params, data.inputs(), &data.labels_f64())
}

/// Inputs over which a supremum is estimated.
#[derive(Clone, Copy, Debug)]
pub enum InputSet<'a> {
    /// All `2^d` inputs.
    Exhaustive,
    /// `count` fresh uniform inputs from `seed`.
    Sampled { count: usize, seed: u64 },
    Given(&'a [SignVector]),
}

/// Largest `‖∇f_θ(x)‖²` over the supplied parameter points and inputs.
///
/// This is a lower estimate of `sup_{θ,x} ‖∇f_θ(x)‖²`; for the linear probe it
/// is exact (`d`).
pub fn sup_grad_norm_estimate<M: DifferentiableModel + ?Sized>(
    model: &M,
    param_points: &[Vec<f64>],
    inputs: InputSet<'_>,
) -> Result<f64, ModelError> {
    if param_points.is_empty() {
        return Err(ModelError::EmptyInput("no parameter points".into()));
    }
    let owned;
    let xs: &[SignVector] = match inputs {
        InputSet::Exhaustive => {
            owned = all_inputs(model.input_dim())?;
            &owned
        }
        InputSet::Sampled { count, seed } => {
            owned = sample_inputs(model.input_dim(), count, seed);
            &owned
        }
        InputSet::Given(xs) => xs,
    };
    if xs.is_empty() {
        return Err(ModelError::EmptyInput("no inputs".into()));
    }
    let mut best = 0.0f64;
    for params in param_points {
        let jac = batch_jacobian(model, params, xs);
        for row in jac.rows.outer_iter() {
            best = best.max(row.dot(&row));
        }
    }
    Ok(best)
}
