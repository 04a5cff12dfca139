//! Concentration inequalities and the closed-form bounds of the main theorems.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
}

/// Multiplicative Chernoff upper tail `Pr[X ≥ (1+δ)μ] ≤ exp(−δ²μ/3)`.
pub fn chernoff_upper(mu: f64, delta: f64) -> Result<f64, BoundError> {
    if !(delta > 0.0) || mu < 0.0 {
        return Err(BoundError::Domain(format!("upper tail needs delta > 0 and mu >= 0, got delta = {delta}, mu = {mu}")));
    }
    Ok((-delta * delta * mu / 3.0).exp())
}

/// Multiplicative Chernoff lower tail `Pr[X ≤ (1−δ)μ] ≤ exp(−δ²μ/2)`.
pub fn chernoff_lower(mu: f64, delta: f64) -> Result<f64, BoundError> {
    if !(delta > 0.0 && delta < 1.0) || mu < 0.0 {
        return Err(BoundError::Domain(format!("lower tail needs 0 < delta < 1 and mu >= 0, got delta = {delta}, mu = {mu}")));
    }
    Ok((-delta * delta * mu / 2.0).exp())
}

/// Hoeffding for a sum of independent `X_i ∈ [a_i, b_i]`:
/// `Pr[|Σ X_i − E Σ X_i| ≥ t] ≤ 2 exp(−2t² / Σ(b_i − a_i)²)`.
pub fn hoeffding_bound(t: f64, ranges: &[(f64, f64)]) -> Result<f64, BoundError> {
    if ranges.is_empty() {
        return Err(BoundError::Domain("no ranges".into()));
    }
    if ranges.iter().any(|&(a, b)| !(b >= a)) {
        return Err(BoundError::Domain("every range needs a <= b".into()));
    }
    let spread: f64 = ranges.iter().map(|(a, b)| (b - a) * (b - a)).sum();
    if spread == 0.0 {
        return Ok(if t > 0.0 { 0.0 } else { 2.0 });
    }
    Ok(2.0 * (-2.0 * t * t / spread).exp())
}

/// Hoeffding for the mean of `n` i.i.d. variables in `[a, b]`, deviation `s`:
/// `2 exp(−2ns² / (b − a)²)`.
pub fn hoeffding_bound_uniform(n: usize, s: f64, a: f64, b: f64) -> f64 {
    let width = b - a;
    2.0 * (-2.0 * n as f64 * s * s / (width * width)).exp()
}

/// `2√(d/n)·sup_sq`, the gradient-variance bound; also the quantity `V`.
pub fn variance_bound(d: usize, n: usize, sup_sq: f64) -> f64 {
    2.0 * (d as f64 / n as f64).sqrt() * sup_sq
}

/// `1 − (4T/ε²)√(d/n)·sup_sq − exp_term`.
pub fn mse_bound_rhs(t: usize, epsilon: f64, d: usize, n: usize, sup_sq: f64, exp_term: f64) -> Result<f64, BoundError> {
    if epsilon == 0.0 {
        return Err(BoundError::DivisionByZero("epsilon"));
    }
    if t == 0 || epsilon.is_infinite() {
        return Ok(1.0 - exp_term);
    }
    Ok(1.0 - 4.0 * t as f64 / (epsilon * epsilon) * (d as f64 / n as f64).sqrt() * sup_sq - exp_term)
}

/// `c₀·e^{−c₁d}`, a stand-in for the `e^{−Ω(d)}` slack with user constants.
pub fn exp_slack(c0: f64, c1: f64, d: usize) -> f64 {
    c0 * (-c1 * d as f64).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsilonRegime {
    /// `ε = V^{1/4}`.
    Poly,
    /// `ε = V^{1/3}`.
    Exp,
}

impl EpsilonRegime {
    /// Polynomial when `n ≤ d^20`, exponential otherwise.
    pub fn infer(d: usize, n: usize) -> Self {
        if (n as f64).ln() <= 20.0 * (d as f64).ln() {
            EpsilonRegime::Poly
        } else {
            EpsilonRegime::Exp
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EpsilonRegime::Poly => "poly",
            EpsilonRegime::Exp => "exp",
        }
    }
}

pub fn choose_epsilon(regime: EpsilonRegime, v: f64) -> Result<f64, BoundError> {
    if !(v > 0.0) {
        return Err(BoundError::Domain(format!("V must be positive, got {v}")));
    }
    Ok(match regime {
        EpsilonRegime::Poly => v.powf(0.25),
        EpsilonRegime::Exp => v.cbrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterReport {
    /// `c = 4c₁ + 4c₂ + 2c₃ + 2c₄ + 1`.
    pub c: f64,
    pub samples_ok: bool,
    pub steps_ok: bool,
    /// `(0.5c − 0.5 − 2c₁ − 2c₂)/2 − c₃` evaluated as written. With the
    /// definition of `c` this simplifies to `(c₄ − c₃)/2`.
    pub implied_exponent: f64,
    /// The floor exponent the theorem states, `c₄`.
    pub claimed_exponent: f64,
}

impl ParameterReport {
    /// Whether the evaluated exponent reaches the stated one.
    pub fn exponent_claim_holds(&self) -> bool {
        self.implied_exponent >= self.claimed_exponent - 1e-12
    }
}

impl ParameterReport {
    pub fn in_regime(&self) -> bool {
        self.samples_ok && self.steps_ok
    }

    pub fn verdict(&self) -> &'static str {
        if self.in_regime() {
            "hypothesis met"
        } else {
            "hypothesis unmet"
        }
    }
}

/// Checks `n ≥ d^c` and `T ≤ d^{c₃}` for constants `c₁..c₄`.
pub fn theorem_parameter_check(cs: [f64; 4], d: usize, n: usize, t: usize) -> Result<ParameterReport, BoundError> {
    if cs.iter().any(|&c| !(c > 0.0)) {
        return Err(BoundError::Domain("all constants must be positive".into()));
    }
    let [c1, c2, c3, c4] = cs;
    let c = 4.0 * c1 + 4.0 * c2 + 2.0 * c3 + 2.0 * c4 + 1.0;
    let ln_d = (d as f64).ln();
    Ok(ParameterReport {
        c,
        samples_ok: (n as f64).ln() >= c * ln_d,
        steps_ok: t == 0 || (t as f64).ln() <= c3 * ln_d,
        implied_exponent: (0.5 * c - 0.5 - 2.0 * c1 - 2.0 * c2) / 2.0 - c3,
        claimed_exponent: c4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn hoeffding_examples() {
        assert!(close(hoeffding_bound(2.0, &[(-1.0, 1.0)]).unwrap(), 2.0 * (-2.0f64).exp()));
        assert_eq!(hoeffding_bound(0.0, &[(-1.0, 1.0); 5]).unwrap(), 2.0);
        assert!(hoeffding_bound(1.0, &[]).is_err());
        assert!(hoeffding_bound(1.0, &[(1.0, -1.0)]).is_err());
        // mean of n variables in [−1,1] at deviation s is a sum at deviation ns
        let n = 37;
        let s = 0.21;
        assert!(close(hoeffding_bound_uniform(n, s, -1.0, 1.0), hoeffding_bound(n as f64 * s, &vec![(-1.0, 1.0); n]).unwrap()));
        assert!(close(hoeffding_bound_uniform(n, s, -1.0, 1.0), 2.0 * (-(n as f64) * s * s / 2.0).exp()));
    }

    #[test]
    fn chernoff_examples() {
        let d = 40.0;
        let delta = 0.3;
        let two_sided = 1.0 - 2.0 * chernoff_upper(d / 2.0, delta).unwrap();
        assert!(close(two_sided, 1.0 - 2.0 * (-delta * delta * d / 6.0).exp()));
        assert!(close(chernoff_lower(10.0, 0.5).unwrap(), (-1.25f64).exp()));
        assert!(chernoff_upper(1.0, 0.0).is_err());
        assert!(chernoff_lower(1.0, 1.0).is_err());
        assert!(chernoff_lower(1.0, f64::NAN).is_err());
    }

    #[test]
    fn variance_bound_examples() {
        assert_eq!(variance_bound(4, 4, 1.0), 2.0);
        assert_eq!(variance_bound(4, 16, 1.0), 1.0);
        assert!(close(variance_bound(10, 256, 10.0), 2.0 * (10.0f64 / 256.0).sqrt() * 10.0));
    }

    #[test]
    fn mse_rhs_examples() {
        assert_eq!(mse_bound_rhs(0, 1.0, 4, 4, 1.0, 0.0).unwrap(), 1.0);
        // 4·1/4 · √(4/16) · 2 = 0.5
        assert!(close(mse_bound_rhs(1, 2.0, 4, 16, 1.0, 0.0).unwrap(), 0.5));
        assert!(close(mse_bound_rhs(1, 2.0, 4, 16, 1.0, 0.25).unwrap(), 0.25));
        assert_eq!(mse_bound_rhs(5, f64::INFINITY, 4, 4, 1.0, 0.0).unwrap(), 1.0);
        assert!(matches!(mse_bound_rhs(1, 0.0, 4, 4, 1.0, 0.0), Err(BoundError::DivisionByZero(_))));
        assert!(close(exp_slack(2.0, 0.5, 4), 2.0 * (-2.0f64).exp()));
    }

    #[test]
    fn epsilon_choice() {
        assert!(close(choose_epsilon(EpsilonRegime::Poly, 16.0).unwrap(), 2.0));
        assert!(close(choose_epsilon(EpsilonRegime::Exp, 8.0).unwrap(), 2.0));
        assert!(choose_epsilon(EpsilonRegime::Poly, 0.0).is_err());
        assert_eq!(EpsilonRegime::infer(16, 4096), EpsilonRegime::Poly);
        assert_eq!(EpsilonRegime::infer(2, 1 << 21), EpsilonRegime::Exp);
        assert_eq!(EpsilonRegime::infer(2, 1 << 20), EpsilonRegime::Poly);
    }

    #[test]
    fn poly_epsilon_turns_mse_term_into_two_t_sqrt_v() {
        let (t, d, n, sup) = (3, 16, 4096, 12.0);
        let v = variance_bound(d, n, sup);
        let eps = choose_epsilon(EpsilonRegime::Poly, v).unwrap();
        let rhs = mse_bound_rhs(t, eps, d, n, sup, 0.0).unwrap();
        assert!(close(1.0 - rhs, 2.0 * t as f64 * v.sqrt()));
    }

    #[test]
    fn parameter_check() {
        let r = theorem_parameter_check([0.25; 4], 16, 4096, 200).unwrap();
        assert!(close(r.c, 4.0));
        assert!(!r.samples_ok);
        assert_eq!(r.verdict(), "hypothesis unmet");
        assert!(close(r.implied_exponent, 0.0));
        assert!(!r.exponent_claim_holds());
        let r = theorem_parameter_check([0.25; 4], 4, 1 << 9, 1).unwrap();
        assert!(r.in_regime());
        assert!(theorem_parameter_check([0.25, 0.0, 0.25, 0.25], 4, 4, 1).is_err());
        let cs = [0.1, 0.7, 1.3, 0.4];
        let r = theorem_parameter_check(cs, 10, 10, 1).unwrap();
        assert!(close(r.implied_exponent, (cs[3] - cs[2]) / 2.0));
        assert_eq!(r.claimed_exponent, cs[3]);
    }
}
