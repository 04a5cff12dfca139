use proptest::prelude::*;
use rayon::ThreadPoolBuilder;

use majlab::harness::commands::{gram_experiment, variance_experiment};
use majlab::harness::run::{execute, random_param_draws};
use majlab::harness::{EpsilonSetting, ModelKind, RunConfig};
use majlab::majority::sample_inputs;
use majlab::oracle::{compute_q, run_mean_trajectory, OracleContext, SupportFamily};
use majlab::{ModelConfig, RecursionMode, TransformerModel};

fn small(seed: u64) -> RunConfig {
    RunConfig {
        d: 7,
        k: 3,
        n: 96,
        t: 6,
        lr: 0.7,
        seed,
        ..RunConfig::default()
    }
}

#[test]
fn infinite_epsilon_reproduces_the_mean_trajectory() {
    for seed in 0..3 {
        let cfg = RunConfig {
            epsilon: EpsilonSetting::Value(f64::INFINITY),
            ..small(seed)
        };
        let out = execute(&cfg, true).unwrap();
        assert_eq!(out.report.q.as_ref().unwrap().probability, 1.0);
        let mc = out.model_config.unwrap();
        let model = TransformerModel::new(mc);
        let ctx = OracleContext::new(SupportFamily::exhaustive(7, 3).unwrap(), sample_inputs(7, 96, seed)).unwrap();
        let traj = run_mean_trajectory(&vec![0.0; mc.num_params()], &model, &ctx, 6, 0.7, false);
        assert_eq!(out.final_params.as_slice(), traj.final_params());
    }
}

#[test]
fn reports_do_not_depend_on_the_worker_count() {
    let run = |threads: usize| {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| execute(&small(4), true).unwrap().report.to_json())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn gram_entries_concentrate_around_population_values() {
    // d = 10, n = 4096, 50 seeds; a seed violates when some off-diagonal entry exceeds 2√(d/n)
    let (mut raw_violations, mut centered_violations) = (0, 0);
    for seed in 0..50 {
        let cfg = RunConfig {
            d: 10,
            k: 5,
            n: 4096,
            seed,
            ..RunConfig::default()
        };
        let g = gram_experiment(&cfg, if seed < 4 { 10 } else { 0 }).unwrap();
        assert_eq!(g.family_size, 252);
        assert!(g.tails.iter().all(|t| t.ok), "{:?}", g.tails);
        assert_eq!(g.frame_failures, 0);
        raw_violations += usize::from(g.max_offdiag > g.offdiag_reference);
        centered_violations += usize::from(g.max_centered_offdiag > g.offdiag_reference);
    }
    assert!(centered_violations * 20 <= 50, "{centered_violations}/50");
    // supports sharing four of five coordinates have E[h_S h_T] far above 2√(d/n),
    // so the uncentered reading fails on every seed
    assert_eq!(raw_violations, 50);
}

#[test]
fn chebyshev_tail_holds_for_the_transformer() {
    for seed in 0..3 {
        let cfg = RunConfig {
            d: 8,
            k: 4,
            n: 128,
            seed,
            ..RunConfig::default()
        };
        let v = variance_experiment(&cfg, 20).unwrap();
        assert_eq!(v.tail_violations, 0);
        assert_eq!(v.sup_kind, "empirical-sup");
    }
}

#[test]
fn linear_runs_report_exact_bounds() {
    let cfg = RunConfig {
        model: ModelKind::Linear,
        ..small(2)
    };
    let r = execute(&cfg, true).unwrap().report;
    assert_eq!(r.sup_sq.value, 7.0);
    assert_eq!(r.sup_sq.kind, "exact");
    assert_eq!(r.q.unwrap().bound.kind, "exact");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn q_grows_with_epsilon(seed in 0u64..1_000, raw in any::<bool>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mode = if raw { RecursionMode::RawTokens } else { RecursionMode::ComputedTokens };
        let mc = ModelConfig::new(6, 3).unwrap().with_recursion(mode);
        let model = TransformerModel::new(mc);
        let ctx = OracleContext::new(SupportFamily::exhaustive(6, 3).unwrap(), sample_inputs(6, 48, seed)).unwrap();
        let init = random_param_draws(mc.num_params(), 1, seed).remove(0);
        let traj = run_mean_trajectory(&init, &model, &ctx, 4, 0.5, true);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small_q = compute_q(&traj, lo).unwrap();
        let large_q = compute_q(&traj, hi).unwrap();
        prop_assert!(small_q.iter().all(|s| large_q.contains(s)));
    }

    #[test]
    fn reported_bounds_match_recomputation(seed in 0u64..50, t in 0usize..4, eps in 0.2f64..8.0) {
        let cfg = RunConfig { t, epsilon: EpsilonSetting::Value(eps), model: ModelKind::Linear, ..small(seed) };
        let r = execute(&cfg, true).unwrap().report;
        let q = r.q.unwrap();
        let expect = if t == 0 { 1.0 } else { 1.0 - 2.0 * t as f64 / (eps * eps) * (7.0f64 / 96.0).sqrt() * 7.0 };
        prop_assert!((q.bound.raw - expect).abs() < 1e-12);
        let rhs = if t == 0 { 1.0 } else { 1.0 - 4.0 * t as f64 / (eps * eps) * (7.0f64 / 96.0).sqrt() * 7.0 };
        prop_assert!((r.mse_bound.rhs - rhs).abs() < 1e-12);
        if !q.bound.vacuous {
            prop_assert!(q.probability >= q.bound.raw);
        }
    }
}
