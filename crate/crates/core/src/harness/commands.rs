//! The subcommands of the `majlab` CLI.
//!
//! Each command produces its artifact in memory together with the list of
//! checked inequalities that failed; the binary writes the artifact and maps
//! violations to the exit code.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::combinatorics::{
    brute_force_support_count, card_a, decay_sweep, identity_decomposition, log_linear_fit, maj_bias,
    strictly_decreasing_after, CombinatoricsError, CountingInstance, DEFAULT_ENUMERATION_CAP,
};
use crate::majority::{all_inputs, sample_inputs, MajorityError, SignVector};
use crate::model::{sup_grad_norm_estimate, InputSet};
use crate::oracle::{frame_sides, gram_matrix, lambda_max, OracleContext, OracleError, DEFAULT_EIGEN_TOL};
use crate::rng::stream_rng;

use super::bounds::{
    choose_epsilon, hoeffding_bound_uniform, mse_bound_rhs, variance_bound, BoundError, EpsilonRegime,
};
use super::config::{ConfigError, EpsilonSetting, ModelKind, OutputFormat, RunConfig};
use super::io::csv_header;
use super::run::{build_family, build_model, execute, random_param_draws, trace_csv, RunError, RunOutcome};

/// Slope the `|A/B − 1|` log fit must reach for the decay check to pass.
pub const DECAY_SLOPE_MAX: f64 = -0.05;
/// Decay must be strictly monotone from this dimension on.
pub const DECAY_MONOTONE_FROM: u64 = 12;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
    #[error(transparent)]
    Majority(#[from] MajorityError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

impl CommandError {
    pub fn is_usage(&self) -> bool {
        matches!(self, CommandError::Usage(_) | CommandError::Config(_))
    }
}

/// A finished command: the artifact to write and any failed checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    pub artifact: String,
    pub violations: Vec<String>,
    /// Extra artifacts as `(extension, contents)`, written next to the main one.
    pub companions: Vec<(&'static str, String)>,
}

impl CommandOutput {
    fn new(artifact: String, violations: Vec<String>) -> Self {
        Self {
            artifact,
            violations,
            companions: Vec::new(),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// One row of the `verify` table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub d: u64,
    pub k: u64,
    pub m: u64,
    #[serde(rename = "A")]
    pub a: String,
    pub brute_a: u64,
    pub identity_ok: bool,
}

impl VerifyRow {
    pub fn ok(&self) -> bool {
        self.identity_ok && self.a == self.brute_a.to_string()
    }
}

/// Closed form, brute force and polynomial identity for every `(d, k, m)` with
/// `1 ≤ k ≤ d ≤ d_max` and `0 ≤ m ≤ d`.
pub fn verify_rows(d_max: u64) -> Result<Vec<VerifyRow>, CommandError> {
    let mut rows = Vec::new();
    for d in 1..=d_max {
        for k in 1..=d {
            for m in 0..=d {
                let inst = CountingInstance::new(d, k, m)?;
                let x = SignVector::from_negatives(d as usize, m as usize);
                rows.push(VerifyRow {
                    d,
                    k,
                    m,
                    a: card_a(&inst).to_string(),
                    brute_a: brute_force_support_count(&x, k as usize, DEFAULT_ENUMERATION_CAP)?,
                    identity_ok: identity_decomposition(&inst)?.holds(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_verify(d_max: u64, format: OutputFormat) -> Result<CommandOutput, CommandError> {
    if d_max == 0 || d_max > 20 {
        return Err(CommandError::Usage(format!("--d-max must be in 1..=20, got {d_max}")));
    }
    let rows = verify_rows(d_max)?;
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !r.ok())
        .map(|r| format!("d={} k={} m={}: A={} brute={} identity_ok={}", r.d, r.k, r.m, r.a, r.brute_a, r.identity_ok))
        .collect();
    let artifact = match format {
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\nd,k,m,A,brute_A,identity_ok\n");
            for r in &rows {
                writeln!(out, "{},{},{},{},{},{}", r.d, r.k, r.m, r.a, r.brute_a, r.identity_ok).unwrap();
            }
            out
        }
        OutputFormat::Json => to_json(&json!({
            "version": crate::VERSION,
            "command": "verify",
            "d_max": d_max,
            "rows": rows,
            "all_ok": bad.is_empty(),
        })),
    };
    Ok(CommandOutput::new(artifact, bad))
}

/// Parses `lo:hi` (or a single value) into an inclusive range.
pub fn parse_range(s: &str) -> Result<(u64, u64), CommandError> {
    let usage = || CommandError::Usage(format!("expected a range lo:hi, got {s:?}"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| usage())?, b.trim().parse().map_err(|_| usage())?),
        None => {
            let v = s.trim().parse().map_err(|_| usage())?;
            (v, v)
        }
    };
    if lo > hi || lo < 4 {
        return Err(CommandError::Usage(format!("range {s:?} must satisfy 4 <= lo <= hi")));
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecaySummary {
    pub d_lo: u64,
    pub d_hi: u64,
    pub strictly_decreasing_after_12: bool,
    pub log_fit_slope: f64,
    pub log_fit_intercept: f64,
    pub slope_max: f64,
}

pub fn cmd_ratio_decay(lo: u64, hi: u64, format: OutputFormat) -> Result<CommandOutput, CommandError> {
    let rows = decay_sweep(lo, hi)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.log_deviation).collect();
    let fit = log_linear_fit(&xs, &ys)
        .ok_or_else(|| CommandError::Usage("the sweep needs at least two distinct dimensions".into()))?;
    let summary = DecaySummary {
        d_lo: lo,
        d_hi: hi,
        strictly_decreasing_after_12: strictly_decreasing_after(&rows, DECAY_MONOTONE_FROM),
        log_fit_slope: fit.slope,
        log_fit_intercept: fit.intercept,
        slope_max: DECAY_SLOPE_MAX,
    };
    let mut violations = Vec::new();
    if !summary.strictly_decreasing_after_12 {
        violations.push(format!("|A/B - 1| is not strictly decreasing beyond d = {DECAY_MONOTONE_FROM}"));
    }
    if fit.slope > DECAY_SLOPE_MAX {
        violations.push(format!("log-fit slope {} exceeds {DECAY_SLOPE_MAX}", fit.slope));
    }
    let artifact = match format {
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\nd,k,m,deviation_num,deviation_den,log_deviation\n");
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.d,
                    r.k,
                    r.m,
                    r.deviation.numerator(),
                    r.deviation.denominator(),
                    r.log_deviation
                )
                .unwrap();
            }
            out
        }
        OutputFormat::Json => {
            let table: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "d": r.d, "k": r.k, "m": r.m,
                        "deviation_num": r.deviation.numerator().to_string(),
                        "deviation_den": r.deviation.denominator().to_string(),
                        "log_deviation": r.log_deviation,
                    })
                })
                .collect();
            to_json(&json!({
                "version": crate::VERSION,
                "command": "ratio-decay",
                "summary": summary,
                "rows": table,
            }))
        }
    };
    Ok(CommandOutput::new(artifact, violations))
}

/// Exact bias `E_S[MAJ(x, S)]` for every number of negatives `m`.
pub fn cmd_bias(d: u64, k: u64, format: OutputFormat) -> Result<CommandOutput, CommandError> {
    if k == 0 || k > d {
        return Err(CommandError::Usage(format!("need 1 <= k <= d, got d = {d}, k = {k}")));
    }
    let rows: Vec<(u64, String, String, f64)> = (0..=d)
        .map(|m| {
            let b = maj_bias(&CountingInstance::new(d, k, m)?);
            Ok((m, b.numerator().to_string(), b.denominator().to_string(), b.to_f64()))
        })
        .collect::<Result<_, CombinatoricsError>>()?;
    let artifact = match format {
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\nd,k,m,bias_num,bias_den,bias\n");
            for (m, num, den, v) in &rows {
                writeln!(out, "{d},{k},{m},{num},{den},{v}").unwrap();
            }
            out
        }
        OutputFormat::Json => {
            let table: Vec<_> = rows
                .iter()
                .map(|(m, num, den, v)| json!({"m": m, "bias_num": num, "bias_den": den, "bias": v}))
                .collect();
            to_json(&json!({"version": crate::VERSION, "command": "bias", "d": d, "k": k, "rows": table}))
        }
    };
    Ok(CommandOutput::new(artifact, Vec::new()))
}

/// One parameter point of the variance experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariancePoint {
    pub draw: usize,
    pub variance: f64,
    pub bound: f64,
    pub within_bound: bool,
    /// Fraction of supports whose deviation exceeds ε.
    pub tail_fraction: f64,
    /// `variance/ε² + 3σ` with `σ` the binomial sampling deviation of the fraction.
    pub tail_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    pub version: &'static str,
    pub command: &'static str,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub family_size: usize,
    pub sup_sq: f64,
    pub sup_kind: &'static str,
    pub epsilon: f64,
    pub points: Vec<VariancePoint>,
    pub bound_exceedances: usize,
    pub tail_violations: usize,
}

/// `σ` of an empirical fraction estimating probability `p` from `count` trials.
pub fn binomial_sigma(p: f64, count: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    (p * (1.0 - p) / count as f64).sqrt()
}

/// Gradient variance at `draws` standard normal parameter points on one dataset.
///
/// The variance bound holds with high probability over the data and is only
/// reported; the Chebyshev tail is a deterministic consequence of the variance
/// and counts as a violation.
pub fn variance_experiment(cfg: &RunConfig, draws: usize) -> Result<VarianceReport, CommandError> {
    cfg.validate()?;
    let family = build_family(cfg)?;
    let ctx = OracleContext::new(family, sample_inputs(cfg.d, cfg.n, cfg.seed))?;
    let (model, _) = build_model(cfg).map_err(RunError::from)?;
    let points = random_param_draws(model.num_params(), draws, cfg.seed);
    let (sup_sq, sup_kind) = match cfg.model {
        ModelKind::Linear => (cfg.d as f64, "exact"),
        ModelKind::Transformer => (
            sup_grad_norm_estimate(model.as_ref(), &points, InputSet::Given(ctx.inputs())).map_err(RunError::from)?,
            "empirical-sup",
        ),
    };
    let bound = variance_bound(cfg.d, cfg.n, sup_sq);
    let epsilon = match cfg.epsilon {
        EpsilonSetting::Value(v) if v > 0.0 && v.is_finite() => v,
        EpsilonSetting::Value(v) => return Err(CommandError::Usage(format!("epsilon must be positive and finite, got {v}"))),
        EpsilonSetting::Auto => choose_epsilon(EpsilonRegime::infer(cfg.d, cfg.n), bound)?,
    };
    let size = ctx.family().len();
    let out: Vec<VariancePoint> = points
        .iter()
        .enumerate()
        .map(|(draw, theta)| {
            let summary = ctx.summarize(model.as_ref(), theta);
            let sq = summary.squared_deviations();
            let variance = sq.iter().sum::<f64>() / size as f64;
            let tail = sq.iter().filter(|&&v| v.sqrt() > epsilon).count() as f64 / size as f64;
            let chebyshev = variance / (epsilon * epsilon);
            VariancePoint {
                draw,
                variance,
                bound,
                within_bound: variance <= bound,
                tail_fraction: tail,
                tail_limit: chebyshev + 3.0 * binomial_sigma(chebyshev, size),
            }
        })
        .collect();
    Ok(VarianceReport {
        version: crate::VERSION,
        command: "variance",
        d: cfg.d,
        k: cfg.k,
        n: cfg.n,
        seed: cfg.seed,
        model: cfg.model,
        family_size: size,
        sup_sq,
        sup_kind,
        epsilon,
        bound_exceedances: out.iter().filter(|p| !p.within_bound).count(),
        tail_violations: out.iter().filter(|p| p.tail_fraction > p.tail_limit).count(),
        points: out,
    })
}

pub fn cmd_variance(cfg: &RunConfig, draws: usize) -> Result<CommandOutput, CommandError> {
    let report = variance_experiment(cfg, draws)?;
    let mut violations = Vec::new();
    if report.tail_violations > 0 {
        violations.push(format!("{} draws exceeded the Chebyshev tail limit", report.tail_violations));
    }
    let artifact = match cfg.format {
        OutputFormat::Json => to_json(&report),
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\ndraw,variance,bound,within_bound,tail_fraction,tail_limit\n");
            for p in &report.points {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    p.draw, p.variance, p.bound, p.within_bound, p.tail_fraction, p.tail_limit
                )
                .unwrap();
            }
            out
        }
    };
    Ok(CommandOutput::new(artifact, violations))
}

/// Empirical tail of the Gram off-diagonal entries around their population values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramTail {
    pub s: f64,
    pub fraction: f64,
    pub hoeffding: f64,
    pub limit: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramReport {
    pub version: &'static str,
    pub command: &'static str,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub family_size: usize,
    pub lambda_max: f64,
    pub frame_trials: usize,
    pub frame_failures: usize,
    pub max_offdiag: f64,
    /// `2√(d/n)`; overlapping supports are correlated, so raw entries may exceed it.
    pub offdiag_reference: f64,
    pub max_centered_offdiag: f64,
    pub tails: Vec<GramTail>,
}

/// Population inner products `E_x[h_S h_T]` over the full cube.
fn population_gram(ctx: &OracleContext) -> Result<ndarray::Array2<f64>, CommandError> {
    let cube = all_inputs(ctx.family().d())?;
    let full = OracleContext::new(ctx.family().clone(), cube)?;
    Ok(gram_matrix(&full)?)
}

/// Gram matrix, `λ_max`, the partial-frame inequality on random ±1 predictors
/// and Hoeffding tails of `G_ST − E[h_S h_T]` at `s = j/√n`, `j = 1..4`.
pub fn gram_experiment(cfg: &RunConfig, trials: usize) -> Result<GramReport, CommandError> {
    cfg.validate()?;
    if cfg.d > 16 {
        return Err(CommandError::Usage("gram enumerates the cube for population values; use d <= 16".into()));
    }
    let family = build_family(cfg)?;
    let ctx = OracleContext::new(family, sample_inputs(cfg.d, cfg.n, cfg.seed))?;
    let g = gram_matrix(&ctx)?;
    let lambda = lambda_max(&g, DEFAULT_EIGEN_TOL)?;
    let frame_failures = (0..trials as u64)
        .filter(|&trial| {
            let mut rng = stream_rng(cfg.seed, 0x6672_616d, trial);
            let table: Vec<f64> = (0..1usize << cfg.d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let f = move |x: &SignVector| table[x.negative_mask() as usize];
            !frame_sides(&ctx, &f, lambda).holds()
        })
        .count();
    let pop = population_gram(&ctx)?;
    let size = g.nrows();
    let mut raw = Vec::new();
    let mut centered = Vec::new();
    for i in 0..size {
        for j in 0..i {
            raw.push(g[[i, j]].abs());
            centered.push((g[[i, j]] - pop[[i, j]]).abs());
        }
    }
    let pairs = centered.len().max(1);
    let root_n = (cfg.n as f64).sqrt();
    let tails = (1..=4)
        .map(|j| {
            let s = j as f64 / root_n;
            let fraction = centered.iter().filter(|&&v| v > s).count() as f64 / pairs as f64;
            let hoeffding = hoeffding_bound_uniform(cfg.n, s, -1.0, 1.0);
            let limit = hoeffding + 3.0 * binomial_sigma(hoeffding, pairs);
            GramTail {
                s,
                fraction,
                hoeffding,
                limit,
                ok: fraction <= limit,
            }
        })
        .collect();
    Ok(GramReport {
        version: crate::VERSION,
        command: "gram",
        d: cfg.d,
        k: cfg.k,
        n: cfg.n,
        seed: cfg.seed,
        family_size: size,
        lambda_max: lambda,
        frame_trials: trials,
        frame_failures,
        max_offdiag: raw.iter().copied().fold(0.0, f64::max),
        offdiag_reference: 2.0 * (cfg.d as f64 / cfg.n as f64).sqrt(),
        max_centered_offdiag: centered.iter().copied().fold(0.0, f64::max),
        tails,
    })
}

pub fn cmd_gram(cfg: &RunConfig, trials: usize) -> Result<CommandOutput, CommandError> {
    let report = gram_experiment(cfg, trials)?;
    let mut violations = Vec::new();
    if report.frame_failures > 0 {
        violations.push(format!("partial-frame inequality failed for {} predictors", report.frame_failures));
    }
    for t in report.tails.iter().filter(|t| !t.ok) {
        violations.push(format!("Gram tail at s = {} is {} > {}", t.s, t.fraction, t.limit));
    }
    let artifact = match cfg.format {
        OutputFormat::Json => to_json(&report),
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\ns,fraction,hoeffding,limit,ok\n");
            for t in &report.tails {
                writeln!(out, "{},{},{},{},{}", t.s, t.fraction, t.hoeffding, t.limit, t.ok).unwrap();
            }
            out
        }
    };
    Ok(CommandOutput::new(artifact, violations))
}

fn run_output(outcome: RunOutcome, format: OutputFormat) -> CommandOutput {
    let violations = outcome.report.violations();
    let trace = trace_csv(&outcome.trace);
    match format {
        OutputFormat::Csv => CommandOutput::new(trace, violations),
        OutputFormat::Json => CommandOutput {
            artifact: outcome.report.to_json(),
            violations,
            companions: vec![("trace.csv", trace)],
        },
    }
}

/// Training under the ε-approximate oracle.
pub fn cmd_train(cfg: &RunConfig) -> Result<(CommandOutput, RunOutcome), CommandError> {
    let outcome = execute(cfg, true)?;
    Ok((run_output(outcome.clone(), cfg.format), outcome))
}

/// Training with true gradients.
pub fn cmd_control(cfg: &RunConfig) -> Result<(CommandOutput, RunOutcome), CommandError> {
    let outcome = execute(cfg, false)?;
    Ok((run_output(outcome.clone(), cfg.format), outcome))
}

/// A training run whose artifact is the L∞ comparison alone.
pub fn cmd_linf(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    if cfg.d > crate::oracle::LINF_DIMENSION_LIMIT {
        return Err(CommandError::Usage(format!(
            "linf enumerates the cube; d = {} exceeds {}",
            cfg.d,
            crate::oracle::LINF_DIMENSION_LIMIT
        )));
    }
    if !matches!(cfg.family, super::config::FamilySetting::Exhaustive) {
        return Err(CommandError::Usage("linf needs an exhaustive family".into()));
    }
    let outcome = execute(cfg, true)?;
    let r = &outcome.report;
    let linf = r.linf.as_ref().expect("linf is computed for exhaustive families with small d");
    let q = r.q.as_ref();
    let mut violations = Vec::new();
    if linf.at_least_pr_q == Some(false) {
        violations.push("linf error fell below Pr[Q]".into());
    }
    let artifact = match cfg.format {
        OutputFormat::Json => to_json(&json!({
            "version": crate::VERSION,
            "command": "linf",
            "config": r.config,
            "hidden_support": r.hidden_support,
            "linf": linf.value,
            "pr_q": q.map(|q| q.probability),
            "q_size": q.map(|q| q.size),
            "family_size": r.family_size,
            "at_least_pr_q": linf.at_least_pr_q,
            "shift_fixed_points": q.and_then(|q| q.shift_fixed_points),
            "shift_maps_q_into_q": q.and_then(|q| q.shift_maps_q_into_q),
        })),
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\nd,k,n,T,seed,linf,pr_q,at_least_pr_q\n");
            let pr = q.map(|q| q.probability.to_string()).unwrap_or_default();
            let ok = linf.at_least_pr_q.map(|b| b.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{},{pr},{ok}", cfg.d, cfg.k, cfg.n, cfg.t, cfg.seed, linf.value).unwrap();
            out
        }
    };
    Ok(CommandOutput::new(artifact, violations))
}

/// Evaluates `1 − (4T/ε²)√(d/n)·sup_sq − exp_term` without training.
pub fn cmd_mse_bound(cfg: &RunConfig, sup_sq: f64, exp_term: f64) -> Result<CommandOutput, CommandError> {
    if !(sup_sq >= 0.0 && sup_sq.is_finite()) {
        return Err(CommandError::Usage(format!("--sup-sq must be a nonnegative number, got {sup_sq}")));
    }
    let v = variance_bound(cfg.d, cfg.n, sup_sq);
    let (epsilon, choice) = match cfg.epsilon {
        EpsilonSetting::Value(e) => (e, "given".to_string()),
        EpsilonSetting::Auto => {
            let regime = EpsilonRegime::infer(cfg.d, cfg.n);
            (choose_epsilon(regime, v)?, format!("auto({})", regime.name()))
        }
    };
    let rhs = mse_bound_rhs(cfg.t, epsilon, cfg.d, cfg.n, sup_sq, exp_term)?;
    let artifact = match cfg.format {
        OutputFormat::Json => to_json(&json!({
            "version": crate::VERSION,
            "command": "mse-bound",
            "d": cfg.d, "n": cfg.n, "T": cfg.t,
            "epsilon": if epsilon.is_finite() { json!(epsilon) } else { json!("inf") },
            "epsilon_choice": choice,
            "sup_sq": sup_sq,
            "exp_term": exp_term,
            "rhs": rhs,
            "vacuous": rhs <= 0.0,
        })),
        OutputFormat::Csv => {
            let mut out = csv_header();
            out.push_str("\nd,n,T,epsilon,sup_sq,exp_term,rhs,vacuous\n");
            writeln!(out, "{},{},{},{epsilon},{sup_sq},{exp_term},{rhs},{}", cfg.d, cfg.n, cfg.t, rhs <= 0.0).unwrap();
            out
        }
    };
    Ok(CommandOutput::new(artifact, Vec::new()))
}
