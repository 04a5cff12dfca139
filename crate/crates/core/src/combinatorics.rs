//! Exact binomial and polynomial arithmetic for counting majority supports.
//!
//! Fix an input `x ∈ {±1}^d` with `m` entries equal to −1. A k-subset `S` has
//! `MAJ(x, S) = +1` exactly when it picks at most `⌊k/2⌋` of the negative
//! coordinates, so the number of such supports is
//!
//! ```text
//! A = Σ_{j=0}^{⌊k/2⌋} C(m, j) · C(d − m, k − j)
//! ```
//!
//! With `Γ(t) = (1 + t)^{d−m}` and the signed truncation
//! `Δ(t) = Σ_{j≤⌊k/2⌋} C(m, j) t^j − Σ_{j>⌊k/2⌋} C(m, j) t^j`, Vandermonde's
//! convolution gives `2A − C(d, k) = Coeff_k[Γ(t) Δ(t)]`. The parity analogue
//! replaces `Δ` by `(1 − t)^m`.
//!
//! All arithmetic in this module is exact. Floating point only appears in
//! [`log_linear_fit`] and in [`ExactRatio::ln`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::majority::SignVector;

/// Default cap on the number of subsets a brute-force oracle may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombinatoricsError {
    #[error("invalid counting instance: {0}")]
    InvalidInstance(String),
    #[error("C(d,k) + Coeff_k[Γ·Δ] = {0} is odd, so the counting identity cannot hold")]
    Parity(BigInt),
    #[error("enumerating {needed} subsets exceeds the cap of {cap}")]
    CapExceeded { needed: BigInt, cap: u64 },
    #[error("zero denominator")]
    ZeroDenominator,
}

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Dense polynomial with arbitrary-precision integer coefficients.
///
/// `coeffs[i]` is the coefficient of `t^i`. The representation is canonical:
/// the leading coefficient is nonzero, and the zero polynomial has no
/// coefficients at all.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct IntegerPolynomial {
    coeffs: Vec<BigInt>,
}

impl IntegerPolynomial {
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::from_coeffs(vec![BigInt::one()])
    }

    pub fn from_coeffs(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::from_coeffs(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    /// `c · t^degree`.
    pub fn monomial(c: BigInt, degree: usize) -> Self {
        let mut coeffs = vec![BigInt::zero(); degree + 1];
        coeffs[degree] = c;
        Self::from_coeffs(coeffs)
    }

    /// `(1 + t)^n`, built from the binomial theorem.
    pub fn one_plus_t_pow(n: u64) -> Self {
        Self::from_coeffs((0..=n).map(|i| binom(n, i)).collect())
    }

    /// `(1 − t)^n`.
    pub fn one_minus_t_pow(n: u64) -> Self {
        Self::from_coeffs(
            (0..=n)
                .map(|i| {
                    let c = binom(n, i);
                    if i % 2 == 0 {
                        c
                    } else {
                        -c
                    }
                })
                .collect(),
        )
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// The coefficient of `t^i`; zero beyond the degree.
    pub fn coeff(&self, i: usize) -> BigInt {
        self.coeffs.get(i).cloned().unwrap_or_default()
    }

    /// Horner evaluation.
    pub fn eval(&self, t: &BigInt) -> BigInt {
        self.coeffs
            .iter()
            .rev()
            .fold(BigInt::zero(), |acc, c| acc * t + c)
    }

    pub fn scale(&self, c: &BigInt) -> Self {
        Self::from_coeffs(self.coeffs.iter().map(|a| a * c).collect())
    }

    /// Multiplication by `t^j`.
    pub fn shift(&self, j: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![BigInt::zero(); j];
        coeffs.extend(self.coeffs.iter().cloned());
        Self { coeffs }
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }
}

impl fmt::Display for IntegerPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.coeffs.iter().join(", "))
    }
}

impl Add for &IntegerPolynomial {
    type Output = IntegerPolynomial;

    fn add(self, rhs: &IntegerPolynomial) -> IntegerPolynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        IntegerPolynomial::from_coeffs((0..len).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &IntegerPolynomial {
    type Output = IntegerPolynomial;

    fn sub(self, rhs: &IntegerPolynomial) -> IntegerPolynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        IntegerPolynomial::from_coeffs((0..len).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Neg for &IntegerPolynomial {
    type Output = IntegerPolynomial;

    fn neg(self) -> IntegerPolynomial {
        IntegerPolynomial {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &IntegerPolynomial {
    type Output = IntegerPolynomial;

    fn mul(self, rhs: &IntegerPolynomial) -> IntegerPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return IntegerPolynomial::zero();
        }
        let mut out = vec![BigInt::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        IntegerPolynomial::from_coeffs(out)
    }
}

macro_rules! forward_owned_binop {
    ($tr:ident, $method:ident) => {
        impl $tr for IntegerPolynomial {
            type Output = IntegerPolynomial;

            fn $method(self, rhs: IntegerPolynomial) -> IntegerPolynomial {
                (&self).$method(&rhs)
            }
        }
    };
}

forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);

impl Neg for IntegerPolynomial {
    type Output = IntegerPolynomial;

    fn neg(self) -> IntegerPolynomial {
        -&self
    }
}

/// `Coeff_i[p]`.
pub fn coeff(p: &IntegerPolynomial, i: usize) -> BigInt {
    p.coeff(i)
}

/// Natural log of `|x|` for arbitrarily large integers; `-inf` for zero.
fn big_ln(x: &BigInt) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let x = x.abs();
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (&x >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// A rational number in lowest terms with a positive denominator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRatio(BigRational);

impl ExactRatio {
    pub fn new(numerator: BigInt, denominator: BigInt) -> Result<Self, CombinatoricsError> {
        if denominator.is_zero() {
            return Err(CombinatoricsError::ZeroDenominator);
        }
        Ok(Self(BigRational::new(numerator, denominator)))
    }

    pub fn from_integer(v: BigInt) -> Self {
        Self(BigRational::from_integer(v))
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn abs(&self) -> Self {
        Self(self.0.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln |self|`, accurate even when numerator and denominator overflow `f64`.
    pub fn ln(&self) -> f64 {
        big_ln(self.numerator()) - big_ln(self.denominator())
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }
}

impl fmt::Display for ExactRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator(), self.denominator())
    }
}

/// Ambient dimension `d`, support size `k`, and number `m` of −1 entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CountingInstance {
    d: u64,
    k: u64,
    m: u64,
}

impl CountingInstance {
    pub fn new(d: u64, k: u64, m: u64) -> Result<Self, CombinatoricsError> {
        if m > d {
            return Err(CombinatoricsError::InvalidInstance(format!("m = {m} exceeds d = {d}")));
        }
        if k > d {
            return Err(CombinatoricsError::InvalidInstance(format!("k = {k} exceeds d = {d}")));
        }
        Ok(Self { d, k, m })
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    /// Largest number of negatives a support may pick and still vote +1.
    pub fn half_k(&self) -> u64 {
        self.k / 2
    }

    /// `⌊k/2⌋ ≤ m ≤ d − ⌊k/2⌋`.
    pub fn in_identity_regime(&self) -> bool {
        self.m >= self.half_k() && self.d - self.m >= self.half_k()
    }

    /// `Γ(t) = (1 + t)^{d−m}`.
    pub fn gamma(&self) -> IntegerPolynomial {
        IntegerPolynomial::one_plus_t_pow(self.d - self.m)
    }

    pub fn total_supports(&self) -> BigInt {
        binom(self.d, self.k)
    }
}

/// Signed truncation `Δ(t)` of `(1 + t)^m` at index `⌊k/2⌋`.
pub fn delta_majority(m: u64, k: u64) -> IntegerPolynomial {
    let split = k / 2;
    IntegerPolynomial::from_coeffs(
        (0..=m)
            .map(|j| {
                let c = binom(m, j);
                if j <= split {
                    c
                } else {
                    -c
                }
            })
            .collect(),
    )
}

/// `Δ_par(t) = (1 − t)^m`.
pub fn delta_parity(m: u64) -> IntegerPolynomial {
    IntegerPolynomial::one_minus_t_pow(m)
}

/// Number of k-supports with `MAJ(x, S) = +1` for any `x` with `m` negatives.
pub fn card_a(inst: &CountingInstance) -> BigInt {
    let (d, k, m) = (inst.d, inst.k, inst.m);
    (0..=inst.half_k().min(m))
        .filter(|&j| j <= k)
        .map(|j| binom(m, j) * binom(d - m, k - j))
        .sum()
}

/// Number of k-supports with `PAR(x, S) = +1`: an even number of negatives picked.
pub fn card_a_parity(inst: &CountingInstance) -> BigInt {
    let (d, k, m) = (inst.d, inst.k, inst.m);
    (0..=m.min(k))
        .step_by(2)
        .map(|j| binom(m, j) * binom(d - m, k - j))
        .sum()
}

/// Both sides of `A = ½C(d,k) + ½Coeff_k[Γ(t)Δ(t)]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentitySides {
    pub lhs: BigInt,
    pub rhs: BigInt,
    /// `Coeff_k[Γ(t)Δ(t)]`.
    pub coefficient: BigInt,
}

impl IdentitySides {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }
}

fn decompose(
    inst: &CountingInstance,
    lhs: BigInt,
    delta: &IntegerPolynomial,
) -> Result<IdentitySides, CombinatoricsError> {
    let product = &inst.gamma() * delta;
    let coefficient = coeff(&product, inst.k as usize);
    let doubled = inst.total_supports() + &coefficient;
    if doubled.is_odd() {
        return Err(CombinatoricsError::Parity(doubled));
    }
    Ok(IdentitySides {
        lhs,
        rhs: doubled / 2,
        coefficient,
    })
}

/// Computes `card_a` and the polynomial route side by side for exact comparison.
pub fn identity_decomposition(inst: &CountingInstance) -> Result<IdentitySides, CombinatoricsError> {
    decompose(inst, card_a(inst), &delta_majority(inst.m, inst.k))
}

/// The parity variant with `Δ_par(t) = (1 − t)^m`.
pub fn parity_identity_decomposition(
    inst: &CountingInstance,
) -> Result<IdentitySides, CombinatoricsError> {
    decompose(inst, card_a_parity(inst), &delta_parity(inst.m))
}

/// `A/B − 1` with `B = ½C(d,k)`, signed and in magnitude.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatioDeviation {
    pub signed: ExactRatio,
    pub magnitude: ExactRatio,
}

pub fn ratio_deviation(inst: &CountingInstance) -> Result<RatioDeviation, CombinatoricsError> {
    if inst.k == 0 {
        return Err(CombinatoricsError::InvalidInstance("k must be at least 1".into()));
    }
    // A / (C/2) − 1 = (2A − C) / C
    let total = inst.total_supports();
    let signed = ExactRatio::new(BigInt::from(2) * card_a(inst) - &total, total)?;
    let magnitude = signed.abs();
    Ok(RatioDeviation { signed, magnitude })
}

/// `E_{S}[MAJ(x, S)] = (2A − C(d,k)) / C(d,k)` for any `x` with `m` negatives.
pub fn maj_bias(inst: &CountingInstance) -> ExactRatio {
    let total = inst.total_supports();
    ExactRatio::new(BigInt::from(2) * card_a(inst) - &total, total)
        .expect("C(d,k) > 0 for k <= d")
}

fn check_cap(d: usize, k: usize, cap: u64) -> Result<(), CombinatoricsError> {
    let needed = binom(d as u64, k as u64);
    if needed > BigInt::from(cap) {
        return Err(CombinatoricsError::CapExceeded { needed, cap });
    }
    Ok(())
}

/// Enumerates every k-subset and counts those with a non-negative restricted sum.
pub fn brute_force_support_count(x: &SignVector, k: usize, cap: u64) -> Result<u64, CombinatoricsError> {
    let d = x.dim();
    check_cap(d, k, cap)?;
    let bits = x.bits();
    Ok((0..d)
        .combinations(k)
        .filter(|s| s.iter().map(|&j| i64::from(bits[j])).sum::<i64>() >= 0)
        .count() as u64)
}

/// Enumerates every k-subset and counts those whose product of entries is +1.
pub fn brute_force_parity_count(x: &SignVector, k: usize, cap: u64) -> Result<u64, CombinatoricsError> {
    let d = x.dim();
    check_cap(d, k, cap)?;
    let bits = x.bits();
    Ok((0..d)
        .combinations(k)
        .filter(|s| s.iter().map(|&j| bits[j]).product::<i8>() == 1)
        .count() as u64)
}

/// Rational upper bound on `e` used by [`cardinality_bounds`].
pub fn e_upper_bound() -> ExactRatio {
    ExactRatio::new(BigInt::from(27_183), BigInt::from(10_000)).expect("nonzero")
}

/// Exact check of `(d/k)^k ≤ C(d,k) ≤ (e·d/k)^k` for `d ≥ k ≥ 1`, with `e`
/// replaced by the rational upper bound [`e_upper_bound`].
pub fn cardinality_bounds(d: u64, k: u64) -> (bool, bool) {
    assert!(k >= 1 && k <= d, "requires d >= k >= 1");
    let c = binom(d, k);
    let kk = BigInt::from(k).pow(k as u32);
    let lower = BigInt::from(d).pow(k as u32) <= &c * &kk;
    let e = e_upper_bound();
    let ed = e.numerator() * BigInt::from(d);
    let upper = &c * kk * e.denominator().pow(k as u32) <= ed.pow(k as u32);
    (lower, upper)
}

/// One point of the `|A/B − 1|` decay sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub d: u64,
    pub k: u64,
    pub m: u64,
    pub deviation: ExactRatio,
    pub log_deviation: f64,
}

/// `|A/B − 1|` along `k = 2⌊d/4⌋`, `m = ⌊d/2⌋` for every `d` in `d_lo..=d_hi`.
pub fn decay_sweep(d_lo: u64, d_hi: u64) -> Result<Vec<DecayRow>, CombinatoricsError> {
    (d_lo..=d_hi)
        .into_par_iter()
        .map(|d| {
            let inst = CountingInstance::new(d, 2 * (d / 4), d / 2)?;
            let deviation = ratio_deviation(&inst)?.magnitude;
            let log_deviation = deviation.ln();
            Ok(DecayRow {
                d,
                k: inst.k,
                m: inst.m,
                deviation,
                log_deviation,
            })
        })
        .collect()
}

/// Whether the deviation strictly decreases from each `d > after_d` to the next.
pub fn strictly_decreasing_after(rows: &[DecayRow], after_d: u64) -> bool {
    rows.iter()
        .filter(|r| r.d >= after_d)
        .tuple_windows()
        .all(|(a, b)| b.deviation < a.deviation)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn log_linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pascal_row(n: usize) -> Vec<BigInt> {
        let mut row = vec![BigInt::one()];
        for _ in 0..n {
            let mut next = vec![BigInt::one(); row.len() + 1];
            for i in 1..row.len() {
                next[i] = &row[i - 1] + &row[i];
            }
            row = next;
        }
        row
    }

    fn inst(d: u64, k: u64, m: u64) -> CountingInstance {
        CountingInstance::new(d, k, m).unwrap()
    }

    fn big(v: i64) -> BigInt {
        BigInt::from(v)
    }

    #[test]
    fn binom_small_cases() {
        assert_eq!(binom(4, 2), big(6));
        assert_eq!(binom(5, 0), big(1));
        assert_eq!(binom(3, 5), big(0));
    }

    #[test]
    fn binom_matches_pascal_recurrence() {
        let row = pascal_row(30);
        for (k, v) in row.iter().enumerate() {
            assert_eq!(&binom(30, k as u64), v);
        }
        assert_eq!(binom(30, 15), big(155_117_520));
    }

    #[test]
    fn polynomial_products() {
        let one_t = IntegerPolynomial::from_i64(&[1, 1]);
        assert_eq!(&one_t * &one_t, IntegerPolynomial::from_i64(&[1, 2, 1]));
        assert_eq!(IntegerPolynomial::one_plus_t_pow(0), IntegerPolynomial::one());
        let p = IntegerPolynomial::from_i64(&[1, 2, 1]) * IntegerPolynomial::from_i64(&[1, 2, -1]);
        assert_eq!(p, IntegerPolynomial::from_i64(&[1, 4, 4, 0, -1]));
        assert_eq!(one_t.pow(5), IntegerPolynomial::one_plus_t_pow(5));
    }

    #[test]
    fn canonical_form_drops_trailing_zeros() {
        let p = IntegerPolynomial::from_i64(&[1, -1]) + IntegerPolynomial::from_i64(&[0, 1]);
        assert_eq!(p.coeffs(), &[big(1)]);
        let z = IntegerPolynomial::from_i64(&[0, 0, 0]);
        assert!(z.is_zero());
        assert_eq!(z.degree(), None);
    }

    #[test]
    fn coefficient_extraction() {
        assert_eq!(coeff(&IntegerPolynomial::one_plus_t_pow(4), 2), big(6));
        assert_eq!(coeff(&IntegerPolynomial::zero(), 3), big(0));
        assert_eq!(coeff(&IntegerPolynomial::from_i64(&[1, 4, 4, 0, -1]), 2), big(4));
    }

    #[test]
    fn delta_majority_examples() {
        assert_eq!(delta_majority(2, 2), IntegerPolynomial::from_i64(&[1, 2, -1]));
        assert_eq!(delta_majority(0, 2), IntegerPolynomial::from_i64(&[1]));
        assert_eq!(delta_majority(3, 2), IntegerPolynomial::from_i64(&[1, 3, -3, -1]));
    }

    #[test]
    fn delta_majority_is_twice_truncation_minus_full_power() {
        for m in 0..12u64 {
            for k in 0..=12u64 {
                let trunc = IntegerPolynomial::from_coeffs((0..=m.min(k / 2)).map(|j| binom(m, j)).collect());
                let rebuilt = trunc.scale(&big(2)) - IntegerPolynomial::one_plus_t_pow(m);
                assert_eq!(delta_majority(m, k), rebuilt, "m={m} k={k}");
                let at_one = delta_majority(m, k).eval(&big(1));
                let expected: BigInt = trunc.coeffs().iter().sum::<BigInt>() * 2 - (BigInt::one() << m as usize);
                assert_eq!(at_one, expected);
            }
        }
    }

    #[test]
    fn delta_parity_examples() {
        assert_eq!(delta_parity(2), IntegerPolynomial::from_i64(&[1, -2, 1]));
        assert_eq!(delta_parity(0), IntegerPolynomial::from_i64(&[1]));
        assert_eq!(delta_parity(3), IntegerPolynomial::from_i64(&[1, -3, 3, -1]));
    }

    #[test]
    fn card_a_examples() {
        assert_eq!(card_a(&inst(4, 2, 2)), big(5));
        assert_eq!(card_a(&inst(4, 2, 0)), big(6));
        let x = SignVector::from_negatives(6, 3);
        let brute = brute_force_support_count(&x, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(card_a(&inst(6, 3, 3)), BigInt::from(brute));
    }

    #[test]
    fn identity_examples() {
        let s = identity_decomposition(&inst(4, 2, 2)).unwrap();
        assert_eq!((s.lhs.clone(), s.rhs.clone(), s.coefficient.clone()), (big(5), big(5), big(4)));
        let s = identity_decomposition(&inst(4, 2, 0)).unwrap();
        assert_eq!((s.lhs, s.rhs), (big(6), big(6)));
    }

    #[test]
    fn identity_holds_for_small_dimensions() {
        for d in 0..=14u64 {
            for k in 0..=d {
                for m in 0..=d {
                    let s = identity_decomposition(&inst(d, k, m)).unwrap();
                    assert!(s.holds(), "d={d} k={k} m={m}");
                    let p = parity_identity_decomposition(&inst(d, k, m)).unwrap();
                    assert!(p.holds(), "parity d={d} k={k} m={m}");
                }
            }
        }
    }

    #[test]
    fn parity_count_matches_brute_force() {
        for d in 1..=10usize {
            for k in 0..=d {
                for m in 0..=d {
                    let x = SignVector::from_negatives(d, m);
                    let brute = brute_force_parity_count(&x, k, DEFAULT_ENUMERATION_CAP).unwrap();
                    assert_eq!(card_a_parity(&inst(d as u64, k as u64, m as u64)), BigInt::from(brute));
                }
            }
        }
    }

    #[test]
    fn ratio_deviation_examples() {
        let r = ratio_deviation(&inst(4, 2, 2)).unwrap();
        assert_eq!(r.magnitude, ExactRatio::new(big(2), big(3)).unwrap());
        let r = ratio_deviation(&inst(4, 2, 0)).unwrap();
        assert_eq!(r.magnitude, ExactRatio::from_integer(big(1)));
        assert!(ratio_deviation(&inst(4, 0, 2)).is_err());
    }

    #[test]
    fn maj_bias_examples() {
        assert_eq!(maj_bias(&inst(4, 2, 2)), ExactRatio::new(big(2), big(3)).unwrap());
        assert_eq!(maj_bias(&inst(4, 2, 4)), ExactRatio::from_integer(big(-1)));
        let x = SignVector::from_negatives(12, 6);
        let brute = brute_force_support_count(&x, 6, DEFAULT_ENUMERATION_CAP).unwrap() as i64;
        let total = 924;
        assert_eq!(
            maj_bias(&inst(12, 6, 6)),
            ExactRatio::new(big(2 * brute - total), big(total)).unwrap()
        );
    }

    #[test]
    fn maj_bias_equals_signed_ratio_deviation() {
        for d in 1..=20u64 {
            for k in 1..=d {
                for m in 0..=d {
                    let i = inst(d, k, m);
                    assert_eq!(maj_bias(&i), ratio_deviation(&i).unwrap().signed);
                }
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        let cap = DEFAULT_ENUMERATION_CAP;
        let x = SignVector::new(vec![1, 1, -1, -1]).unwrap();
        assert_eq!(brute_force_support_count(&x, 2, cap).unwrap(), 5);
        assert_eq!(brute_force_support_count(&SignVector::ones(4), 2, cap).unwrap(), 6);
        assert_eq!(brute_force_support_count(&SignVector::from_negatives(4, 4), 2, cap).unwrap(), 0);
        let wide = SignVector::ones(40);
        assert!(matches!(
            brute_force_support_count(&wide, 20, cap),
            Err(CombinatoricsError::CapExceeded { .. })
        ));
    }

    #[test]
    fn binomial_cardinality_bounds() {
        for d in 2..=60u64 {
            for k in 2..=d {
                assert_eq!(cardinality_bounds(d, k), (true, true), "d={d} k={k}");
            }
        }
        assert!(e_upper_bound().to_f64() > std::f64::consts::E);
    }

    #[test]
    fn exact_ratio_is_reduced() {
        let r = ExactRatio::new(big(-4), big(-6)).unwrap();
        assert_eq!((r.numerator().clone(), r.denominator().clone()), (big(2), big(3)));
        assert!(ExactRatio::new(big(1), big(0)).is_err());
        let tiny = ExactRatio::new(BigInt::one(), BigInt::one() << 3000usize).unwrap();
        assert!((tiny.ln() + 3000.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn fit_recovers_a_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -0.3 * x + 2.0).collect();
        let fit = log_linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-12 && (fit.intercept - 2.0).abs() < 1e-12);
    }

    fn arb_poly() -> impl Strategy<Value = IntegerPolynomial> {
        prop::collection::vec(-1000i64..1000, 0..8).prop_map(|c| IntegerPolynomial::from_i64(&c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn coeff_index_shift(p in arb_poly(), k in 0usize..12, j in 0usize..6) {
            prop_assume!(j <= k);
            prop_assert_eq!(coeff(&p, k - j), coeff(&p.shift(j), k));
        }

        #[test]
        fn coeff_linearity(p in arb_poly(), q in arb_poly(), a in -50i64..50, b in -50i64..50, k in 0usize..10) {
            let combo = &p.scale(&big(a)) + &q.scale(&big(b));
            prop_assert_eq!(coeff(&combo, k), big(a) * coeff(&p, k) + big(b) * coeff(&q, k));
        }

        #[test]
        fn product_evaluates_multiplicatively(p in arb_poly(), q in arb_poly(), t in -5i64..5) {
            let t = big(t);
            prop_assert_eq!((&p * &q).eval(&t), p.eval(&t) * q.eval(&t));
        }
    }
}
