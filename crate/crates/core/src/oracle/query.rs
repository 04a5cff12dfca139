//! The ε-approximate gradient oracle, mean-gradient trajectories and the
//! noninformative set Q.

use rayon::prelude::*;

use crate::majority::{all_inputs, MajorityError, Predictor, SignVector};
use crate::model::DifferentiableModel;

use super::{GradientSummary, OracleContext, OracleError, SupportFamily};

/// Which side of the ε threshold the oracle hides the support on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OracleDirection {
    /// Mean gradient when `dev ≤ ε`, so the answer is always ε-close to the truth.
    #[default]
    HideWhenClose,
    /// Mean gradient when `dev ≥ ε`, the inequality as printed in the definition.
    PaperLiteral,
}

impl OracleDirection {
    pub fn name(self) -> &'static str {
        match self {
            OracleDirection::HideWhenClose => "hide_when_close",
            OracleDirection::PaperLiteral => "paper_literal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "hide_when_close" => Some(OracleDirection::HideWhenClose),
            "paper_literal" => Some(OracleDirection::PaperLiteral),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    epsilon: f64,
    pub direction: OracleDirection,
}

impl OracleConfig {
    /// `epsilon` may be `+∞`; it must not be negative or NaN.
    pub fn new(epsilon: f64, direction: OracleDirection) -> Result<Self, OracleError> {
        if !(epsilon >= 0.0) {
            return Err(OracleError::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon, direction })
    }

    pub fn hiding(epsilon: f64) -> Result<Self, OracleError> {
        Self::new(epsilon, OracleDirection::HideWhenClose)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Mean,
    True,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Mean => "mean",
            Branch::True => "true",
        }
    }
}

/// Branch taken at deviation `dev`. A deviation of exactly ε hides.
pub fn select_branch(dev: f64, cfg: &OracleConfig) -> Branch {
    let hide = match cfg.direction {
        OracleDirection::HideWhenClose => dev <= cfg.epsilon,
        OracleDirection::PaperLiteral => dev >= cfg.epsilon,
    };
    if hide {
        Branch::Mean
    } else {
        Branch::True
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The oracle's answer given the true and the mean gradient.
pub fn respond(true_grad: &[f64], mean_grad: &[f64], cfg: &OracleConfig) -> (Vec<f64>, Branch) {
    match select_branch(distance(true_grad, mean_grad), cfg) {
        Branch::Mean => (mean_grad.to_vec(), Branch::Mean),
        Branch::True => (true_grad.to_vec(), Branch::True),
    }
}

/// Queries the oracle for support `support` (a position in the context's family).
pub fn oracle_query<M: DifferentiableModel + ?Sized>(
    params: &[f64],
    model: &M,
    ctx: &OracleContext,
    support: usize,
    cfg: &OracleConfig,
) -> (Vec<f64>, Branch) {
    let summary = ctx.summarize(model, params);
    respond(&summary.support_gradient(support), &summary.mean_gradient(), cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub params: Vec<f64>,
    pub mean_gradient: Vec<f64>,
    pub lr: f64,
    /// Per-support `‖∇L_{n,S}(θ_t) − ∇̄(θ_t)‖`, in family order.
    pub deviations: Option<Vec<f64>>,
}

/// Gradient descent on `∇̄`: `θ_{t+1} = θ_t − lr·∇̄(θ_t)`, with `T + 1` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectoryRecord {
    /// Number of updates `T`.
    pub fn t(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn final_params(&self) -> &[f64] {
        &self.steps.last().expect("record holds θ₀").params
    }

    /// Largest deviation of each support over all recorded steps.
    pub fn max_deviations(&self) -> Result<Vec<f64>, OracleError> {
        let mut out: Option<Vec<f64>> = None;
        for step in &self.steps {
            let dev = step.deviations.as_ref().ok_or(OracleError::MissingDeviations)?;
            match &mut out {
                None => out = Some(dev.clone()),
                Some(acc) => acc.iter_mut().zip(dev).for_each(|(a, &b)| *a = a.max(b)),
            }
        }
        out.ok_or(OracleError::MissingDeviations)
    }
}

/// Applies `θ ← θ − lr·g` in place.
pub fn descend(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

pub fn run_mean_trajectory<M: DifferentiableModel + ?Sized>(
    init: &[f64],
    model: &M,
    ctx: &OracleContext,
    t: usize,
    lr: f64,
    record_deviations: bool,
) -> TrajectoryRecord {
    run_mean_trajectory_with(init, model, ctx, t, lr, record_deviations, |_, _| {})
}

/// As [`run_mean_trajectory`], calling `observe(t, summary)` at every step.
pub fn run_mean_trajectory_with<M: DifferentiableModel + ?Sized>(
    init: &[f64],
    model: &M,
    ctx: &OracleContext,
    t: usize,
    lr: f64,
    record_deviations: bool,
    mut observe: impl FnMut(usize, &GradientSummary),
) -> TrajectoryRecord {
    let mut params = init.to_vec();
    let mut steps = Vec::with_capacity(t + 1);
    for step in 0..=t {
        let summary = ctx.summarize(model, &params);
        observe(step, &summary);
        let mean_gradient = summary.mean_gradient();
        let next = (step < t).then(|| {
            let mut next = params.clone();
            descend(&mut next, &mean_gradient, lr);
            next
        });
        steps.push(TrajectoryStep {
            params: std::mem::take(&mut params),
            mean_gradient,
            lr,
            deviations: record_deviations.then(|| summary.deviations()),
        });
        if let Some(next) = next {
            params = next;
        }
    }
    TrajectoryRecord { steps }
}

/// Positions of the supports whose deviation stays `≤ ε` at every recorded step.
pub fn compute_q(traj: &TrajectoryRecord, epsilon: f64) -> Result<Vec<usize>, OracleError> {
    Ok(q_from_max_deviations(&traj.max_deviations()?, epsilon))
}

pub fn q_from_max_deviations(max_dev: &[f64], epsilon: f64) -> Vec<usize> {
    max_dev
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= epsilon)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QBound {
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
}

/// `1 − (2T/ε²)·√(d/n)·sup_sq`, the lower bound on `Pr[S ∈ Q]`.
pub fn q_probability_bound(t: usize, epsilon: f64, d: usize, n: usize, sup_sq: f64) -> Result<QBound, OracleError> {
    if epsilon == 0.0 {
        return Err(OracleError::DivisionByZero("epsilon"));
    }
    if !(epsilon > 0.0) {
        return Err(OracleError::InvalidEpsilon(epsilon));
    }
    let raw = if t == 0 || epsilon.is_infinite() {
        1.0
    } else {
        1.0 - 2.0 * t as f64 / (epsilon * epsilon) * (d as f64 / n as f64).sqrt() * sup_sq
    };
    Ok(QBound {
        raw,
        clamped: raw.max(0.0),
        vacuous: raw <= 0.0,
    })
}

/// Largest `d` for which [`linf_error`] enumerates the cube.
pub const LINF_DIMENSION_LIMIT: usize = 16;

/// `E_{S∈family} [max_x |MAJ(x,S) − f(x)|]` over all `2^d` inputs.
pub fn linf_error(pred: &dyn Predictor, family: &SupportFamily) -> Result<f64, OracleError> {
    let d = family.d();
    if d > LINF_DIMENSION_LIMIT {
        return Err(OracleError::Majority(MajorityError::ExactTooLarge { d, limit: LINF_DIMENSION_LIMIT }));
    }
    let cube = all_inputs(d)?;
    let values: Vec<f64> = cube.par_iter().map(|x: &SignVector| pred.predict(x)).collect();
    let masks: Vec<u64> = cube.iter().map(|x| x.negative_mask()).collect();
    let per_support: Vec<f64> = family
        .supports()
        .par_iter()
        .map(|s| {
            let (smask, k) = (s.mask(), s.k() as u32);
            masks
                .iter()
                .zip(&values)
                .map(|(m, v)| {
                    let h = if 2 * (m & smask).count_ones() <= k { 1.0 } else { -1.0 };
                    (h - v).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(per_support.iter().sum::<f64>() / family.len() as f64)
}
