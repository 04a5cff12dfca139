//! End-to-end training runs behind `train`, `linf` and `control`.
//!
//! A learner starts from zero parameters and takes `T` gradient steps on the
//! empirical loss of a hidden support, receiving its gradients from the
//! ε-approximate oracle (or the true gradients in a control run). Alongside,
//! the mean-gradient trajectory is followed to determine the set Q of supports
//! for which the oracle never reveals anything. While the learner's own
//! queries are answered with the mean, the two trajectories coincide and
//! share one gradient evaluation per step.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::majority::{clip, population_mse, sample_inputs, MajorityError, MseMode, EXACT_DIMENSION_LIMIT};
use crate::model::{
    sup_grad_norm_estimate, BoundModel, DifferentiableModel, InputSet, LinearProbe, ModelConfig, ModelError,
    TransformerModel,
};
use crate::oracle::{
    descend, linf_error, q_from_max_deviations, q_probability_bound, respond, select_branch, shift_automorphism,
    Branch, OracleConfig, OracleContext, OracleDirection, OracleError, SupportFamily, LINF_DIMENSION_LIMIT,
};
use crate::rng::{purpose, stream_rng};

use super::bounds::{
    choose_epsilon, exp_slack, mse_bound_rhs, theorem_parameter_check, variance_bound, BoundError, EpsilonRegime,
};
use super::config::{ConfigError, EpsilonSetting, FamilySetting, ModelKind, RunConfig};
use super::io::csv_header;

/// Fresh inputs for the Monte Carlo test MSE when `d` is too large to enumerate.
pub const MONTE_CARLO_TEST_SAMPLES: usize = 100_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Majority(#[from] MajorityError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

fn real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub lr: f64,
    pub epsilon: String,
    pub seed: u64,
    pub model: ModelKind,
    pub recursion: &'static str,
    pub link: &'static str,
    pub family: String,
    pub direction: &'static str,
    pub sup_draws: usize,
    pub slack_c0: f64,
    pub slack_c1: f64,
    pub theorem_constants: [f64; 4],
}

impl ConfigEcho {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            d: cfg.d,
            k: cfg.k,
            n: cfg.n,
            t: cfg.t,
            lr: cfg.lr,
            epsilon: cfg.epsilon.to_string(),
            seed: cfg.seed,
            model: cfg.model,
            recursion: cfg.recursion.name(),
            link: cfg.link.name(),
            family: cfg.family.to_string(),
            direction: cfg.direction.name(),
            sup_draws: cfg.sup_draws,
            slack_c0: cfg.slack.0,
            slack_c1: cfg.slack.1,
            theorem_constants: cfg.theorem_constants,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupReport {
    /// `sup ‖∇f_θ(x)‖²` used by every bound in the report.
    pub value: f64,
    /// `exact` (linear probe) or `empirical-sup`.
    pub kind: &'static str,
    /// Value known before training, from which an `auto` ε is derived.
    pub pre_run: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonReport {
    #[serde(serialize_with = "real")]
    pub value: f64,
    /// `given`, `auto(poly)` or `auto(exp)`.
    pub choice: String,
    /// `V = 2√(d/n)·sup_pre_run` when chosen automatically.
    pub v: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MseReport {
    pub value: f64,
    pub std_error: Option<f64>,
    pub kind: &'static str,
    pub clipped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
    pub kind: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QReport {
    pub size: usize,
    pub probability: f64,
    pub bound: BoundReport,
    /// `Pr[Q] ≥ bound`; `None` when the bound is vacuous.
    pub bound_holds: Option<bool>,
    pub shift_fixed_points: Option<usize>,
    pub shift_maps_q_into_q: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MseBoundReport {
    pub rhs: f64,
    pub exp_term: f64,
    pub vacuous: bool,
    pub kind: &'static str,
    /// Measured MSE fell below a positive right-hand side.
    pub alert: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    /// Exact gradient variance at `θ₀` over the family.
    pub initial: f64,
    pub bound: f64,
    pub kind: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinfReport {
    pub value: f64,
    /// `linf ≥ Pr[Q]`, when Q is known.
    pub at_least_pr_q: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub c: f64,
    pub samples_ok: bool,
    pub steps_ok: bool,
    pub verdict: &'static str,
    pub implied_exponent: f64,
    pub claimed_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub hidden_support: String,
    pub family_size: usize,
    pub num_params: usize,
    pub oracle: bool,
    pub epsilon: EpsilonReport,
    pub sup_sq: SupReport,
    pub test_mse: MseReport,
    pub loss_trace: Vec<f64>,
    pub mean_branch_steps: usize,
    pub true_branch_steps: usize,
    pub first_true_step: Option<usize>,
    pub q: Option<QReport>,
    pub mse_bound: MseBoundReport,
    pub variance: VarianceReport,
    pub linf: Option<LinfReport>,
    pub theorem_regime: RegimeReport,
    pub wall_time_s: Option<f64>,
}

impl RunReport {
    /// Any checked inequality that failed in this run.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.q.as_ref().and_then(|q| q.bound_holds) == Some(false) {
            out.push("Pr[Q] fell below its positive lower bound".into());
        }
        if self.mse_bound.alert {
            out.push("measured test MSE fell below a positive mse_bound_rhs".into());
        }
        if self.linf.as_ref().and_then(|l| l.at_least_pr_q) == Some(false) {
            out.push("linf error fell below Pr[Q]".into());
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One line of the training trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub empirical_loss: f64,
    pub dev_min: f64,
    pub dev_median: f64,
    pub dev_max: f64,
    pub branch_mean_fraction: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = csv_header();
    out.push_str("\nstep,t_empirical_loss,dev_min,dev_median,dev_max,branch_mean_fraction\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step, r.empirical_loss, r.dev_min, r.dev_median, r.dev_max, r.branch_mean_fraction
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trace: Vec<TraceRow>,
    pub final_params: Vec<f64>,
    /// Parameters at the end of the mean-gradient trajectory (oracle runs only).
    pub mean_final_params: Option<Vec<f64>>,
    pub model_config: Option<ModelConfig>,
}

pub fn build_family(cfg: &RunConfig) -> Result<SupportFamily, OracleError> {
    match cfg.family {
        FamilySetting::Exhaustive => SupportFamily::exhaustive(cfg.d, cfg.k),
        FamilySetting::Sampled(count) => SupportFamily::sampled(cfg.d, cfg.k, count, cfg.seed),
    }
}

pub fn build_model(cfg: &RunConfig) -> Result<(Box<dyn DifferentiableModel>, Option<ModelConfig>), ModelError> {
    Ok(match cfg.model {
        ModelKind::Linear => (Box::new(LinearProbe::new(cfg.d)), None),
        ModelKind::Transformer => {
            let mc = ModelConfig::new(cfg.d, cfg.k)?.with_recursion(cfg.recursion).with_link(cfg.link);
            (Box::new(TransformerModel::new(mc)), Some(mc))
        }
    })
}

/// `count` standard normal parameter vectors from the run seed.
pub fn random_param_draws(num_params: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, purpose::PARAMS, i as u64);
            (0..num_params).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs the full pipeline. With `use_oracle = false` the learner receives true
/// gradients and no Q is computed.
pub fn execute(cfg: &RunConfig, use_oracle: bool) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    cfg.validate()?;
    let family = build_family(cfg)?;
    let hidden = family.pick(cfg.seed);
    let hidden_support = family.supports()[hidden].clone();
    let ctx = OracleContext::new(family, sample_inputs(cfg.d, cfg.n, cfg.seed))?;
    let (model, model_config) = build_model(cfg)?;
    let p = model.num_params();
    let init = vec![0.0; p];

    let (sup_pre, sup_kind) = match cfg.model {
        ModelKind::Linear => (cfg.d as f64, "exact"),
        ModelKind::Transformer => {
            let mut points = vec![init.clone()];
            points.extend(random_param_draws(p, cfg.sup_draws, cfg.seed));
            (sup_grad_norm_estimate(model.as_ref(), &points, InputSet::Given(ctx.inputs()))?, "empirical-sup")
        }
    };

    let epsilon = match cfg.epsilon {
        EpsilonSetting::Value(v) => EpsilonReport { value: v, choice: "given".into(), v: None },
        EpsilonSetting::Auto => {
            let v = variance_bound(cfg.d, cfg.n, sup_pre);
            let regime = EpsilonRegime::infer(cfg.d, cfg.n);
            EpsilonReport {
                value: choose_epsilon(regime, v)?,
                choice: format!("auto({})", regime.name()),
                v: Some(v),
            }
        }
    };
    let oracle_cfg = OracleConfig::new(epsilon.value, cfg.direction)?;

    let labels: Vec<f64> = ctx.labels(hidden).iter().map(|&v| f64::from(v)).collect();
    let mut learner = init.clone();
    let mut mean_params = init.clone();
    let mut max_dev = vec![0.0f64; ctx.family().len()];
    let mut sup_seen = sup_pre;
    let mut trace = Vec::with_capacity(cfg.t + 1);
    let mut variance_initial = 0.0;
    let (mut mean_steps, mut true_steps, mut first_true) = (0usize, 0usize, None);

    for step in 0..=cfg.t {
        let summary = ctx.summarize(model.as_ref(), &learner);
        sup_seen = sup_seen.max(summary.max_grad_norm_sq);
        let sq_dev = summary.squared_deviations();
        if step == 0 {
            variance_initial = sq_dev.iter().sum::<f64>() / sq_dev.len() as f64;
        }
        let devs: Vec<f64> = sq_dev.iter().map(|v| v.sqrt()).collect();
        let loss = summary
            .predictions
            .iter()
            .zip(&labels)
            .map(|(f, y)| (y - f) * (y - f))
            .sum::<f64>()
            / (2.0 * cfg.n as f64);
        let mut sorted = devs.clone();
        sorted.sort_by(f64::total_cmp);
        let hiding = devs.iter().filter(|&&v| select_branch(v, &oracle_cfg) == Branch::Mean).count();
        trace.push(TraceRow {
            step,
            empirical_loss: loss,
            dev_min: sorted[0],
            dev_median: median(&sorted),
            dev_max: sorted[sorted.len() - 1],
            branch_mean_fraction: hiding as f64 / devs.len() as f64,
        });

        if step == cfg.t {
            break;
        }
        // Q counts the T query points θ₀..θ_{T−1}; the final parameters are never queried
        let learner_mean = summary.mean_gradient();
        let mut mean_grad = None;
        if use_oracle {
            if mean_params == learner {
                max_dev.iter_mut().zip(&devs).for_each(|(a, &b)| *a = a.max(b));
                mean_grad = Some(learner_mean.clone());
            } else {
                let s = ctx.summarize(model.as_ref(), &mean_params);
                sup_seen = sup_seen.max(s.max_grad_norm_sq);
                max_dev.iter_mut().zip(s.deviations()).for_each(|(a, b)| *a = a.max(b));
                mean_grad = Some(s.mean_gradient());
            }
        }
        let true_grad = summary.support_gradient(hidden);
        let step_grad = if use_oracle {
            let (g, branch) = respond(&true_grad, &learner_mean, &oracle_cfg);
            match branch {
                Branch::Mean => mean_steps += 1,
                Branch::True => {
                    true_steps += 1;
                    first_true.get_or_insert(step);
                }
            }
            g
        } else {
            true_steps += 1;
            true_grad
        };
        descend(&mut learner, &step_grad, cfg.lr);
        if let Some(g) = mean_grad {
            descend(&mut mean_params, &g, cfg.lr);
        }
    }

    let sup_value = match cfg.model {
        ModelKind::Linear => sup_pre,
        ModelKind::Transformer => sup_seen,
    };
    let bound_kind = sup_kind;

    let predictor = BoundModel::new(model.as_ref(), learner.clone());
    let mode = if cfg.d <= EXACT_DIMENSION_LIMIT {
        MseMode::Exact
    } else {
        MseMode::MonteCarlo {
            samples: MONTE_CARLO_TEST_SAMPLES,
            seed: cfg.seed,
        }
    };
    let mse = population_mse(&predictor, &hidden_support, mode)?;
    let clipped_pred = |x: &crate::majority::SignVector| clip(crate::majority::Predictor::predict(&predictor, x));
    let clipped = population_mse(&clipped_pred, &hidden_support, mode)?;
    let test_mse = MseReport {
        value: mse.value,
        std_error: mse.std_error,
        kind: if mse.is_exact() { "exact" } else { "monte_carlo" },
        clipped: clipped.value,
    };

    let q = if use_oracle && cfg.direction == OracleDirection::HideWhenClose {
        let members = q_from_max_deviations(&max_dev, epsilon.value);
        let probability = members.len() as f64 / ctx.family().len() as f64;
        let b = q_probability_bound(cfg.t, epsilon.value, cfg.d, cfg.n, sup_value)?;
        let shift = ctx.family().is_exhaustive().then(|| shift_automorphism(ctx.family(), Some(&members)));
        Some(QReport {
            size: members.len(),
            probability,
            bound: BoundReport {
                raw: b.raw,
                clamped: b.clamped,
                vacuous: b.vacuous,
                kind: bound_kind,
            },
            bound_holds: (!b.vacuous).then_some(probability >= b.raw),
            shift_fixed_points: shift.as_ref().map(|s| s.fixed_points.len()),
            shift_maps_q_into_q: shift.and_then(|s| s.maps_into),
        })
    } else {
        None
    };

    let exp_term = exp_slack(cfg.slack.0, cfg.slack.1, cfg.d);
    let rhs = mse_bound_rhs(cfg.t, epsilon.value, cfg.d, cfg.n, sup_value, exp_term)?;
    let mse_bound = MseBoundReport {
        rhs,
        exp_term,
        vacuous: rhs <= 0.0,
        kind: bound_kind,
        alert: rhs > 0.0 && test_mse.value < rhs,
    };

    let linf = (cfg.d <= LINF_DIMENSION_LIMIT && ctx.family().is_exhaustive())
        .then(|| linf_error(&predictor, ctx.family()))
        .transpose()?
        .map(|value| LinfReport {
            value,
            at_least_pr_q: q.as_ref().map(|q| value >= q.probability),
        });

    let regime = theorem_parameter_check(cfg.theorem_constants, cfg.d, cfg.n, cfg.t)?;
    let report = RunReport {
        version: crate::VERSION,
        command: if use_oracle { "train" } else { "control" },
        config: ConfigEcho::new(cfg),
        hidden_support: hidden_support.to_string(),
        family_size: ctx.family().len(),
        num_params: p,
        oracle: use_oracle,
        epsilon,
        sup_sq: SupReport {
            value: sup_value,
            kind: sup_kind,
            pre_run: sup_pre,
        },
        test_mse,
        loss_trace: trace.iter().map(|r| r.empirical_loss).collect(),
        mean_branch_steps: mean_steps,
        true_branch_steps: true_steps,
        first_true_step: first_true,
        q,
        mse_bound,
        variance: VarianceReport {
            initial: variance_initial,
            bound: variance_bound(cfg.d, cfg.n, sup_value),
            kind: bound_kind,
        },
        linf,
        theorem_regime: RegimeReport {
            c: regime.c,
            samples_ok: regime.samples_ok,
            steps_ok: regime.steps_ok,
            verdict: regime.verdict(),
            implied_exponent: regime.implied_exponent,
            claimed_exponent: regime.claimed_exponent,
        },
        wall_time_s: cfg.record_wall_time.then(|| started.elapsed().as_secs_f64()),
    };
    Ok(RunOutcome {
        report,
        trace,
        final_params: learner,
        mean_final_params: use_oracle.then_some(mean_params),
        model_config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: ModelKind) -> RunConfig {
        RunConfig {
            d: 6,
            k: 3,
            n: 64,
            t: 5,
            lr: 0.5,
            model,
            seed: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn report_fields_recompute_from_stored_inputs() {
        for model in [ModelKind::Linear, ModelKind::Transformer] {
            let out = execute(&small(model), true).unwrap();
            let r = &out.report;
            let c = &r.config;
            let eps = r.epsilon.value;
            let q = r.q.as_ref().unwrap();
            let qb = q_probability_bound(c.t, eps, c.d, c.n, r.sup_sq.value).unwrap();
            assert_eq!(q.bound.raw, qb.raw);
            let rhs = mse_bound_rhs(c.t, eps, c.d, c.n, r.sup_sq.value, r.mse_bound.exp_term).unwrap();
            assert_eq!(r.mse_bound.rhs, rhs);
            assert_eq!(r.variance.bound, variance_bound(c.d, c.n, r.sup_sq.value));
            let v = variance_bound(c.d, c.n, r.sup_sq.pre_run);
            assert_eq!(r.epsilon.v, Some(v));
            assert_eq!(eps, v.powf(0.25));
            assert_eq!(out.trace.len(), c.t + 1);
            assert_eq!(r.loss_trace.len(), c.t + 1);
            assert_eq!(r.mean_branch_steps + r.true_branch_steps, c.t);
            assert!(r.wall_time_s.is_none());
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(ModelKind::Transformer);
        let a = execute(&cfg, true).unwrap();
        let b = execute(&cfg, true).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(trace_csv(&a.trace), trace_csv(&b.trace));
    }

    #[test]
    fn infinite_epsilon_follows_the_mean_trajectory() {
        let cfg = RunConfig {
            epsilon: EpsilonSetting::Value(f64::INFINITY),
            ..small(ModelKind::Transformer)
        };
        let out = execute(&cfg, true).unwrap();
        let q = out.report.q.as_ref().unwrap();
        assert_eq!(q.probability, 1.0);
        assert_eq!(out.report.true_branch_steps, 0);
        assert_eq!(Some(&out.final_params), out.mean_final_params.as_ref());
        assert!(out.trace.iter().all(|r| r.branch_mean_fraction == 1.0));
    }

    #[test]
    fn without_queries_every_support_stays_hidden() {
        let cfg = RunConfig {
            t: 0,
            epsilon: EpsilonSetting::Value(1e-9),
            ..small(ModelKind::Linear)
        };
        let q = execute(&cfg, true).unwrap().report.q.unwrap();
        assert_eq!((q.probability, q.bound.raw, q.bound_holds), (1.0, 1.0, Some(true)));
        let cfg = RunConfig { t: 1, ..cfg };
        assert_eq!(execute(&cfg, true).unwrap().report.q.unwrap().size, 0);
    }

    #[test]
    fn csv_layout() {
        let out = execute(&small(ModelKind::Linear), false).unwrap();
        let csv = trace_csv(&out.trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], csv_header());
        assert_eq!(lines[1], "step,t_empirical_loss,dev_min,dev_median,dev_max,branch_mean_fraction");
        assert_eq!(lines.len(), 2 + 6);
        assert!(lines[2].starts_with("0,"));
        assert!(out.report.q.is_none());
        assert_eq!(out.report.command, "control");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[1.0, 2.0, 4.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 4.0, 8.0]), 3.0);
    }
}
