//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use majlab::combinatorics::{
    card_a, decay_sweep, identity_decomposition, log_linear_fit, strictly_decreasing_after, CountingInstance,
};
use majlab::harness::bounds::variance_bound;
use majlab::harness::commands::{binomial_sigma, gram_experiment, variance_experiment};
use majlab::harness::run::execute;
use majlab::harness::{EpsilonSetting, ModelKind, RunConfig};
use majlab::majority::{clip, sample_inputs, SignVector};
use majlab::model::DifferentiableModel;
use majlab::oracle::{compute_q, run_mean_trajectory, OracleContext, SupportFamily};
use majlab::{ModelConfig, RecursionMode, TransformerModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

/// Supports with `j` negatives vote +1 iff `2j ≤ k`.
fn count_by_sum(d: u64, k: u64, m: u64) -> BigInt {
    (0..=k.min(m))
        .filter(|j| 2 * j <= k)
        .map(|j| binom(m, j) * binom(d - m, k - j))
        .sum()
}

fn maj_label(x: &SignVector, support: &[usize]) -> f64 {
    let s: i32 = support.iter().map(|&j| i32::from(x.get(j))).sum();
    if s >= 0 {
        1.0
    } else {
        -1.0
    }
}

fn counting_identity() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for d in 1..=30u64 {
        for k in 1..=d {
            for m in k / 2..=d - k / 2 {
                let inst = CountingInstance::new(d, k, m).unwrap();
                match identity_decomposition(&inst) {
                    Ok(sides) if sides.holds() => {}
                    other => bad.push(format!("({d},{k},{m}): {other:?}")),
                }
                checked += 1;
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} instances, {} failures {:?}", bad.len(), bad.first()))
}

fn brute_force_equivalence() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for d in 1..=14u64 {
        for m in 0..=d {
            // x has its first m coordinates negative
            let neg = (1u32 << m) - 1;
            let mut counts = vec![0u64; d as usize + 1];
            for subset in 0u32..1 << d {
                let k = subset.count_ones();
                let j = (subset & neg).count_ones();
                if 2 * j <= k {
                    counts[k as usize] += 1;
                }
            }
            for k in 1..=d {
                let a = card_a(&CountingInstance::new(d, k, m).unwrap());
                if a != BigInt::from(counts[k as usize]) {
                    bad.push((d, k, m));
                }
                checked += 1;
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} (d,k,m) cells, mismatches {bad:?}"))
}

fn decay_witness() -> Outcome {
    let rows = decay_sweep(8, 48).unwrap();
    let exact_ok = rows.iter().all(|r| {
        let c = binom(r.d, r.k);
        let dev = BigRational::new(BigInt::from(2) * count_by_sum(r.d, r.k, r.m) - &c, c);
        let dev = if dev < BigRational::zero() { -dev } else { dev };
        &dev == r.deviation.as_rational()
    });
    let decreasing = strictly_decreasing_after(&rows, 12);
    let xs: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.log_deviation).collect();
    let slope = log_linear_fit(&xs, &ys).unwrap().slope;
    let first_rise = rows
        .windows(2)
        .find(|w| w[0].d >= 12 && w[1].deviation >= w[0].deviation)
        .map(|w| w[1].d);
    outcome(
        exact_ok && decreasing && slope <= -0.05,
        format!(
            "exact values match: {exact_ok}; strictly decreasing beyond 12: {decreasing} (first rise at d = {first_rise:?}); \
             log-fit slope {slope:.4} (need <= -0.05)"
        ),
    )
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for case in 0..100 {
        let d = rng.random_range(3..=6usize);
        let k = rng.random_range(1..=d);
        let mode = if case % 2 == 0 { RecursionMode::ComputedTokens } else { RecursionMode::RawTokens };
        let model = TransformerModel::new(ModelConfig::new(d, k).unwrap().with_recursion(mode));
        let p = model.num_params();
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x = SignVector::new((0..d).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()).unwrap();
        let mut grad = vec![0.0; p];
        model.predict_and_grad(&theta, &x, &mut grad);
        let fd: Vec<f64> = (0..p)
            .map(|i| {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[i] += h;
                b[i] -= h;
                (model.predict(&a, &x) - model.predict(&b, &x)) / (2.0 * h)
            })
            .collect();
        let diff = grad.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
        let scale = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(fd.iter().map(|f| f * f).sum::<f64>().sqrt());
        worst = worst.max(diff / scale.max(1e-6));
    }
    outcome(worst <= 1e-5, format!("100 cases, worst relative error {worst:.3e} (need <= 1e-5)"))
}

fn linear_cfg(seed: u64) -> RunConfig {
    RunConfig {
        d: 10,
        k: 5,
        n: 256,
        model: ModelKind::Linear,
        seed,
        ..RunConfig::default()
    }
}

/// Direct `(1/|F|) Σ_S ‖(1/n) Σ_x (h_S(x) − h̄(x)) x‖²` for the linear probe.
fn direct_linear_variance(cfg: &RunConfig) -> f64 {
    let family = SupportFamily::exhaustive(cfg.d, cfg.k).unwrap();
    let xs = sample_inputs(cfg.d, cfg.n, cfg.seed);
    let labels: Vec<Vec<f64>> = family.supports().iter().map(|s| xs.iter().map(|x| maj_label(x, s.indices())).collect()).collect();
    let size = labels.len() as f64;
    let mean: Vec<f64> = (0..xs.len()).map(|i| labels.iter().map(|l| l[i]).sum::<f64>() / size).collect();
    labels
        .iter()
        .map(|l| {
            (0..cfg.d)
                .map(|j| {
                    let g: f64 = xs.iter().enumerate().map(|(i, x)| (l[i] - mean[i]) * f64::from(x.get(j))).sum();
                    (g / cfg.n as f64).powi(2)
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        / size
}

fn variance_bound_rate() -> (Outcome, Outcome) {
    let bound = variance_bound(10, 256, 10.0);
    let mut violating_seeds = 0;
    let mut tail_failures = 0;
    let mut tail_checks = 0;
    let mut oracle_gap = 0.0f64;
    for seed in 0..100u64 {
        let cfg = linear_cfg(seed);
        let report = variance_experiment(&cfg, 100).unwrap();
        assert_eq!(report.points.len(), 100);
        if report.points.iter().any(|p| p.variance > bound) {
            violating_seeds += 1;
        }
        if seed < 5 {
            let direct = direct_linear_variance(&cfg);
            oracle_gap = oracle_gap.max((direct - report.points[0].variance).abs() / direct);
        }
        // Chebyshev tail at the automatic ε and at multiples of the standard deviation
        let family = SupportFamily::exhaustive(10, 5).unwrap();
        let ctx = OracleContext::new(family, sample_inputs(10, 256, seed)).unwrap();
        let model = majlab::LinearProbe::new(10);
        let thetas = majlab::harness::run::random_param_draws(10, 100, seed);
        for theta in &thetas {
            let sq = ctx.summarize(&model, theta).squared_deviations();
            let size = sq.len();
            let var = sq.iter().sum::<f64>() / size as f64;
            for eps in [report.epsilon, 0.5 * var.sqrt(), var.sqrt(), 2.0 * var.sqrt(), 4.0 * var.sqrt()] {
                let frac = sq.iter().filter(|&&v| v.sqrt() > eps).count() as f64 / size as f64;
                let cheb = var / (eps * eps);
                tail_checks += 1;
                if frac > cheb + 3.0 * binomial_sigma(cheb, size) {
                    tail_failures += 1;
                }
            }
        }
    }
    let rate = violating_seeds as f64 / 100.0;
    (
        outcome(
            rate <= 0.05 && oracle_gap < 1e-9,
            format!(
                "violating seeds {violating_seeds}/100 (need <= 5%); bound {bound:.4}; direct-recomputation gap {oracle_gap:.1e}"
            ),
        ),
        outcome(tail_failures == 0, format!("{tail_checks} (θ, ε) checks, {tail_failures} above variance/ε² + 3σ")),
    )
}

fn oracle_q_guarantees() -> Outcome {
    let mut positive = 0;
    let mut failures = Vec::new();
    let mut runs = 0;
    for (d, k, n) in [(10usize, 5usize, 4096usize), (8, 4, 4096), (12, 6, 8192)] {
        for (t, eps) in [(1usize, 2.0f64), (2, 3.0), (4, 4.0), (1, 1.5), (3, 6.0)] {
            for seed in 0..3u64 {
                let cfg = RunConfig {
                    d,
                    k,
                    n,
                    t,
                    epsilon: EpsilonSetting::Value(eps),
                    model: ModelKind::Linear,
                    seed,
                    ..RunConfig::default()
                };
                let r = execute(&cfg, true).unwrap().report;
                let q = r.q.unwrap();
                runs += 1;
                if q.bound.raw > 0.0 {
                    positive += 1;
                    if q.probability < q.bound.raw {
                        failures.push(format!("d={d} T={t} eps={eps} seed={seed}: {} < {}", q.probability, q.bound.raw));
                    }
                }
            }
        }
    }
    for (d, k) in [(6usize, 3usize), (8, 4)] {
        for seed in 0..5u64 {
            let cfg = RunConfig {
                d,
                k,
                n: 512,
                t: 5,
                seed,
                ..RunConfig::default()
            };
            let q = execute(&cfg, true).unwrap().report.q.unwrap();
            runs += 1;
            if q.bound.raw > 0.0 {
                positive += 1;
                if q.probability < q.bound.raw {
                    failures.push(format!("transformer d={d} seed={seed}"));
                }
            }
        }
    }
    let mut monotone = true;
    for seed in 0..20u64 {
        let mc = ModelConfig::new(6, 3).unwrap();
        let model = TransformerModel::new(mc);
        let ctx = OracleContext::new(SupportFamily::exhaustive(6, 3).unwrap(), sample_inputs(6, 64, seed)).unwrap();
        let init = majlab::harness::run::random_param_draws(mc.num_params(), 1, seed).remove(0);
        let traj = run_mean_trajectory(&init, &model, &ctx, 8, 0.5, true);
        let mut prev: Vec<usize> = Vec::new();
        for i in 0..=60 {
            let q = compute_q(&traj, i as f64 * 0.01).unwrap();
            if !prev.iter().all(|s| q.contains(s)) {
                monotone = false;
            }
            prev = q;
        }
    }
    outcome(
        positive > 0 && failures.is_empty() && monotone,
        format!(
            "{runs} runs, {positive} with a positive bound, {} below it {:?}; Q(ε) monotone on 20 trajectories: {monotone}",
            failures.len(),
            failures.first()
        ),
    )
}

fn linf_lower_bound() -> Outcome {
    let mut bad = Vec::new();
    let mut min_margin = f64::INFINITY;
    for d in [6usize, 8, 10, 12] {
        for seed in 0..5u64 {
            let cfg = RunConfig {
                d,
                k: d / 2,
                n: 512,
                t: 10,
                seed,
                ..RunConfig::default()
            };
            let r = execute(&cfg, true).unwrap().report;
            let q = r.q.unwrap();
            let linf = r.linf.unwrap().value;
            let pr = q.size as f64 / r.family_size as f64;
            min_margin = min_margin.min(linf - pr);
            if linf < pr {
                bad.push((d, seed));
            }
        }
    }
    outcome(bad.is_empty(), format!("20 runs, min linf - |Q|/|S| = {min_margin:.4}, failures {bad:?}"))
}

fn mse_hardness() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in [7u64, 8, 9, 10, 11] {
        let cfg = RunConfig {
            d: 16,
            k: 8,
            n: 4096,
            t: 200,
            lr: 1.0,
            epsilon: EpsilonSetting::Auto,
            seed,
            ..RunConfig::default()
        };
        let started = Instant::now();
        let out = execute(&cfg, true).unwrap();
        let elapsed = started.elapsed();
        let r = &out.report;
        // independent exact population MSE over all 2^16 inputs
        let model = TransformerModel::new(out.model_config.unwrap());
        let hidden: Vec<usize> = r
            .hidden_support
            .trim_matches(|c| c == '{' || c == '}')
            .split(',')
            .map(|s| s.parse::<usize>().unwrap() - 1)
            .collect();
        let direct = (0..1u64 << 16)
            .map(|mask| {
                let x = SignVector::from_mask(16, mask);
                (maj_label(&x, &hidden) - model.predict(&out.final_params, &x)).powi(2)
            })
            .sum::<f64>()
            / 65536.0;
        let mse = r.test_mse.value;
        let rhs = r.mse_bound.rhs;
        let ok = mse >= 0.8 && (rhs <= 0.0 || mse >= rhs) && elapsed < Duration::from_secs(600) && (direct - mse).abs() < 1e-9;
        pass &= ok;
        lines.push(format!(
            "seed {seed}: mse {mse:.4} (direct {direct:.4}), rhs {rhs:.2}, Pr[Q] {:.3}, {:.0}s",
            r.q.as_ref().unwrap().probability,
            elapsed.as_secs_f64()
        ));
    }
    outcome(pass, format!("need mse >= 0.8; {}", lines.join("; ")))
}

fn clipping_and_frame() -> Outcome {
    let mut clip_ok = true;
    for i in -500..=500 {
        let f = i as f64 / 100.0;
        for g in [-1.0, 1.0] {
            clip_ok &= (g - f) * (g - f) >= (g - clip(f)) * (g - clip(f));
        }
    }
    let cfg = RunConfig {
        d: 8,
        k: 4,
        n: 256,
        seed: 11,
        ..RunConfig::default()
    };
    let g = gram_experiment(&cfg, 100).unwrap();
    outcome(
        clip_ok && g.frame_failures == 0 && g.frame_trials == 100,
        format!(
            "clipping grid ok: {clip_ok}; partial frame failures {}/100 (λ_max {:.3})",
            g.frame_failures, g.lambda_max
        ),
    )
}

fn control_sanity() -> Outcome {
    let cfg = RunConfig {
        d: 6,
        k: 1,
        n: 256,
        t: 500,
        lr: 0.5,
        model: ModelKind::Linear,
        seed: 1,
        ..RunConfig::default()
    };
    let r = execute(&cfg, false).unwrap().report;
    let first: Vec<f64> = r.loss_trace[..11].to_vec();
    let decreasing = first.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing,
        format!("loss {:.4} -> {:.4} over 10 steps, final {:.4}", first[0], first[10], r.loss_trace[500]),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "{} {id:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            started.elapsed().as_secs_f64()
        );
    };
    let timed = |limit: u64, f: fn() -> Outcome| {
        move || {
            let started = Instant::now();
            let mut o = f();
            let secs = started.elapsed().as_secs_f64();
            if secs >= limit as f64 {
                o.pass = false;
                o.detail.push_str(&format!("; took {secs:.1}s, limit {limit}s"));
            }
            o
        }
    };
    report(1, "counting identity", &mut timed(60, counting_identity));
    report(2, "brute-force equivalence", &mut timed(60, brute_force_equivalence));
    report(3, "exponential decay witness", &mut timed(30, decay_witness));
    report(4, "gradient correctness", &mut timed(10, gradient_correctness));
    let started = Instant::now();
    let (variance, tail) = variance_bound_rate();
    let secs = started.elapsed().as_secs_f64();
    let variance = outcome(
        variance.pass && secs < 120.0,
        format!("{}; took {secs:.1}s (limit 120s)", variance.detail),
    );
    report(5, "variance bound", &mut || outcome(variance.pass, variance.detail.clone()));
    report(6, "chebyshev tail", &mut || outcome(tail.pass, tail.detail.clone()));
    report(7, "oracle and Q guarantees", &mut oracle_q_guarantees);
    report(8, "linf lower bound", &mut linf_lower_bound);
    report(9, "mse hardness", &mut mse_hardness);
    report(10, "clipping and partial frame", &mut clipping_and_frame);
    report(11, "control sanity", &mut control_sanity);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
