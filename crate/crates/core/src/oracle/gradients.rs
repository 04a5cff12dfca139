//! Per-support gradients of the empirical loss, their mean and their spread.
//!
//! With `J` the `n × P` Jacobian of the model on the shared inputs, `f` its
//! predictions and `h_S` the labels of support `S`,
//!
//! ```text
//! ∇L_{n,S}(θ) = (1/n) Jᵀ(f − h_S)
//! ```
//!
//! so one matrix product `Hᵀ J` over the label matrix yields every support's
//! gradient at once. Supports are processed in fixed-size chunks, which keeps
//! the result independent of the number of worker threads.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::majority::{maj_unchecked, SignVector};
use crate::model::{batch_jacobian, DifferentiableModel};

use super::{OracleError, SupportFamily};

const CHUNK: usize = 256;

/// Labels of every support of a family on a shared input set.
pub struct OracleContext {
    family: SupportFamily,
    inputs: Vec<SignVector>,
    /// `|family| × n`, row `s` holds `h_S(x_i)`.
    labels: Array2<i8>,
    /// `h̄(x_i)`, the label averaged over the family.
    mean_labels: Array1<f64>,
}

impl OracleContext {
    pub fn new(family: SupportFamily, inputs: Vec<SignVector>) -> Result<Self, OracleError> {
        if inputs.is_empty() {
            return Err(OracleError::EmptyInputs);
        }
        if let Some(x) = inputs.iter().find(|x| x.dim() != family.d()) {
            return Err(OracleError::DimensionMismatch {
                expected: family.d(),
                actual: x.dim(),
            });
        }
        let n = inputs.len();
        let mut labels = Array2::<i8>::zeros((family.len(), n));
        let masks: Option<Vec<u64>> = (family.d() <= 64).then(|| inputs.iter().map(|x| x.negative_mask()).collect());
        labels
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(family.supports().par_iter())
            .for_each(|(mut row, s)| match &masks {
                Some(masks) => {
                    let (smask, k) = (s.mask(), s.k() as u32);
                    for (h, m) in row.iter_mut().zip(masks) {
                        *h = if 2 * (m & smask).count_ones() <= k { 1 } else { -1 };
                    }
                }
                None => {
                    for (h, x) in row.iter_mut().zip(&inputs) {
                        *h = maj_unchecked(x, s);
                    }
                }
            });
        let total = family.len() as f64;
        let mean_labels = labels.map(|&v| f64::from(v)).sum_axis(Axis(0)) / total;
        Ok(Self {
            family,
            inputs,
            labels,
            mean_labels,
        })
    }

    pub fn family(&self) -> &SupportFamily {
        &self.family
    }

    pub fn inputs(&self) -> &[SignVector] {
        &self.inputs
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn labels(&self, support: usize) -> ArrayView1<'_, i8> {
        self.labels.row(support)
    }

    pub fn mean_labels(&self) -> &Array1<f64> {
        &self.mean_labels
    }

    /// Labels as a dense `|family| × n` matrix of ±1.
    pub fn label_matrix(&self) -> Array2<f64> {
        self.labels.map(|&v| f64::from(v))
    }

    /// Gradients of all supports at `params`.
    pub fn summarize<M: DifferentiableModel + ?Sized>(&self, model: &M, params: &[f64]) -> GradientSummary {
        let jac = batch_jacobian(model, params, &self.inputs);
        let n = self.n() as f64;
        let f = Array1::from(jac.predictions.clone());
        let data_term = jac.rows.t().dot(&f) / n;
        let p = model.num_params();
        let rows = self.family.len();
        let mut label_terms = Array2::<f64>::zeros((rows, p));
        label_terms
            .axis_chunks_iter_mut(Axis(0), CHUNK)
            .into_par_iter()
            .enumerate()
            .for_each(|(c, mut out)| {
                let start = c * CHUNK;
                let chunk = self.labels.slice(s![start..start + out.nrows(), ..]).map(|&v| f64::from(v));
                out.assign(&(chunk.dot(&jac.rows) / n));
            });
        let max_grad_norm_sq = jac.rows.outer_iter().map(|r| r.dot(&r)).fold(0.0, f64::max);
        GradientSummary {
            predictions: jac.predictions,
            data_term,
            label_terms,
            max_grad_norm_sq,
        }
    }
}

/// All support gradients at one parameter point.
///
/// Row `s` of `label_terms` is `(1/n) Jᵀ h_S`; support `s` has gradient
/// `data_term − label_terms[s]`.
pub struct GradientSummary {
    pub predictions: Vec<f64>,
    pub data_term: Array1<f64>,
    pub label_terms: Array2<f64>,
    /// `max_i ‖∇f_θ(x_i)‖²` over the shared inputs.
    pub max_grad_norm_sq: f64,
}

impl GradientSummary {
    pub fn support_count(&self) -> usize {
        self.label_terms.nrows()
    }

    pub fn support_gradient(&self, support: usize) -> Vec<f64> {
        (&self.data_term - &self.label_terms.row(support)).to_vec()
    }

    fn mean_label_term(&self) -> Array1<f64> {
        self.label_terms.mean_axis(Axis(0)).expect("family is nonempty")
    }

    /// `∇̄(θ)`: the average of the support gradients.
    pub fn mean_gradient(&self) -> Vec<f64> {
        (&self.data_term - &self.mean_label_term()).to_vec()
    }

    /// `‖∇L_{n,S}(θ) − ∇̄(θ)‖²` for every support.
    pub fn squared_deviations(&self) -> Vec<f64> {
        let mean = self.mean_label_term();
        self.label_terms
            .outer_iter()
            .map(|row| row.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect()
    }

    /// `‖∇L_{n,S}(θ) − ∇̄(θ)‖` for every support.
    pub fn deviations(&self) -> Vec<f64> {
        self.squared_deviations().into_iter().map(f64::sqrt).collect()
    }
}

/// An averaged quantity, with a standard error when it was estimated from a
/// sampled family.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: Option<T>,
}

/// Finite-population factor `(N − m)/(N − 1)` for a without-replacement sample.
fn finite_population_factor(family: &SupportFamily, population: Option<f64>) -> f64 {
    let m = family.len() as f64;
    match population {
        Some(total) if total > 1.0 => ((total - m) / (total - 1.0)).max(0.0),
        _ => 1.0,
    }
}

fn population_size(family: &SupportFamily) -> Option<f64> {
    use num_traits::ToPrimitive;
    crate::combinatorics::binom(family.d() as u64, family.k() as u64).to_f64()
}

impl OracleContext {
    fn sampled(&self) -> bool {
        matches!(self.family.mode(), super::FamilyMode::Sampled { .. })
    }

    /// `∇̄(θ)`, with a per-coordinate standard error in sampled mode.
    pub fn mean_gradient_estimate(&self, summary: &GradientSummary) -> Estimate<Vec<f64>> {
        let value = summary.mean_gradient();
        let std_error = self.sampled().then(|| {
            let m = summary.support_count() as f64;
            let fpc = finite_population_factor(&self.family, population_size(&self.family));
            summary
                .label_terms
                .var_axis(Axis(0), if m > 1.0 { 1.0 } else { 0.0 })
                .iter()
                .map(|v| (v / m * fpc).sqrt())
                .collect()
        });
        Estimate { value, std_error }
    }

    /// `Var_n(θ; 𝒮) = E_S ‖∇L_{n,S} − ∇̄‖²`.
    ///
    /// Exact for exhaustive and explicit families. For a sampled family the
    /// estimate is unbiased for the full-family value, with a standard error
    /// from the spread of the squared deviations.
    pub fn variance_estimate(&self, summary: &GradientSummary) -> Estimate<f64> {
        let sq = summary.squared_deviations();
        let m = sq.len() as f64;
        let mean_sq = sq.iter().sum::<f64>() / m;
        if !self.sampled() || sq.len() < 2 {
            return Estimate { value: mean_sq, std_error: None };
        }
        let population = population_size(&self.family);
        let total = population.unwrap_or(f64::INFINITY);
        // the m − 1 divisor is unbiased for the population spread with divisor N − 1
        let scale = if total.is_finite() { m / (m - 1.0) * (total - 1.0) / total } else { m / (m - 1.0) };
        let spread = sq.iter().map(|v| (v - mean_sq) * (v - mean_sq)).sum::<f64>() / (m - 1.0);
        let fpc = finite_population_factor(&self.family, population);
        Estimate {
            value: mean_sq * scale,
            std_error: Some((spread / m * fpc).sqrt() * scale),
        }
    }
}

/// `∇̄(θ)` over `family` on the shared `inputs`.
pub fn mean_gradient<M: DifferentiableModel + ?Sized>(
    params: &[f64],
    model: &M,
    family: &SupportFamily,
    inputs: &[SignVector],
) -> Result<Estimate<Vec<f64>>, OracleError> {
    let ctx = OracleContext::new(family.clone(), inputs.to_vec())?;
    let summary = ctx.summarize(model, params);
    Ok(ctx.mean_gradient_estimate(&summary))
}

pub fn gradient_variance<M: DifferentiableModel + ?Sized>(
    params: &[f64],
    model: &M,
    family: &SupportFamily,
    inputs: &[SignVector],
) -> Result<Estimate<f64>, OracleError> {
    let ctx = OracleContext::new(family.clone(), inputs.to_vec())?;
    let summary = ctx.summarize(model, params);
    Ok(ctx.variance_estimate(&summary))
}
