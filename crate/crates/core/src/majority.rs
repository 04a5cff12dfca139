//! The k-majority learning problem.
//!
//! Inputs are uniform sign vectors `x ∈ {±1}^d`; the target is
//! `MAJ(x, S) = +1` iff `Σ_{j∈S} x_j ≥ 0` for a hidden k-subset `S`.
//! Ties vote +1 everywhere in this crate.
//!
//! The empirical loss carries a ½ factor and the population loss does not.
//! Both are implemented literally.

use std::fmt;
use std::fmt::Write as _;

use itertools::Itertools;
use rand::Rng;
use thiserror::Error;

use crate::combinatorics::binom;
use crate::rng::{purpose, stream_rng};

/// Largest dimension for exhaustive enumeration over all `2^d` inputs.
pub const EXACT_DIMENSION_LIMIT: usize = 20;

/// Cap on `2^d · C(d,k)` pairs checked by [`complement_identity_check`].
pub const COMPLEMENT_CHECK_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MajorityError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid sign vector: {0}")]
    InvalidSignVector(String),
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("exact evaluation needs d <= {limit}, got d = {d}")]
    ExactTooLarge { d: usize, limit: usize },
    #[error("enumeration of {needed} cases exceeds the cap of {cap}")]
    CapExceeded { needed: u128, cap: u64 },
    #[error("dataset parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A point of `{±1}^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(bits: Vec<i8>) -> Result<Self, MajorityError> {
        if bits.is_empty() {
            return Err(MajorityError::InvalidSignVector("length must be at least 1".into()));
        }
        if let Some(b) = bits.iter().find(|&&b| b != 1 && b != -1) {
            return Err(MajorityError::InvalidSignVector(format!("entry {b} is not ±1")));
        }
        Ok(Self(bits))
    }

    pub fn ones(d: usize) -> Self {
        Self(vec![1; d])
    }

    /// First `m` entries −1, the rest +1.
    pub fn from_negatives(d: usize, m: usize) -> Self {
        Self((0..d).map(|j| if j < m { -1 } else { 1 }).collect())
    }

    /// Bit `j` of `mask` set means `x_j = −1`.
    pub fn from_mask(d: usize, mask: u64) -> Self {
        Self((0..d).map(|j| if mask >> j & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, j: usize) -> i8 {
        self.0[j]
    }

    pub fn count_negatives(&self) -> usize {
        self.0.iter().filter(|&&b| b < 0).count()
    }

    /// Mask of the −1 positions; requires `d ≤ 64`.
    pub fn negative_mask(&self) -> u64 {
        debug_assert!(self.dim() <= 64);
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b < 0)
            .fold(0u64, |acc, (j, _)| acc | 1 << j)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn product(&self) -> i8 {
        self.0.iter().product()
    }
}

impl fmt::Display for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_char(if b > 0 { '+' } else { '-' })?;
        }
        Ok(())
    }
}

/// A k-subset of `{0, …, d−1}`, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Support {
    d: usize,
    indices: Vec<usize>,
}

impl Support {
    /// Builds a support from 0-based indices; they must be strictly increasing.
    pub fn new(d: usize, indices: Vec<usize>) -> Result<Self, MajorityError> {
        if indices.is_empty() {
            return Err(MajorityError::InvalidSupport("support must be nonempty".into()));
        }
        if !indices.iter().tuple_windows().all(|(a, b)| a < b) {
            return Err(MajorityError::InvalidSupport(format!("{indices:?} is not strictly increasing")));
        }
        if indices.last().is_some_and(|&j| j >= d) {
            return Err(MajorityError::InvalidSupport(format!("{indices:?} has an index outside [0, {d})")));
        }
        Ok(Self { d, indices })
    }

    /// Builds a support from 1-based indices, in any order.
    pub fn from_one_based(d: usize, indices: &[usize]) -> Result<Self, MajorityError> {
        if indices.contains(&0) {
            return Err(MajorityError::InvalidSupport("1-based indices start at 1".into()));
        }
        let mut idx: Vec<usize> = indices.iter().map(|j| j - 1).collect();
        idx.sort_unstable();
        Self::new(d, idx)
    }

    /// `{0, …, d−1}`.
    pub fn full(d: usize) -> Self {
        Self { d, indices: (0..d).collect() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Mask with bit `j` set for every `j ∈ S`; requires `d ≤ 64`.
    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0u64, |acc, &j| acc | 1 << j)
    }

    /// `[d] \ S`, or `None` when `S = [d]`.
    pub fn complement(&self) -> Option<Self> {
        let rest: Vec<usize> = (0..self.d).filter(|j| !self.indices.contains(j)).collect();
        Self::new(self.d, rest).ok()
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.indices.iter().map(|j| j + 1).join(","))
    }
}

fn check_dims(x: &SignVector, s: &Support) -> Result<(), MajorityError> {
    if x.dim() != s.d() {
        return Err(MajorityError::DimensionMismatch {
            expected: s.d(),
            actual: x.dim(),
        });
    }
    Ok(())
}

pub(crate) fn maj_unchecked(x: &SignVector, s: &Support) -> i8 {
    let sum: i32 = s.indices.iter().map(|&j| i32::from(x.0[j])).sum();
    if sum >= 0 {
        1
    } else {
        -1
    }
}

/// `MAJ(x, S)`, with ties voting +1.
pub fn maj(x: &SignVector, s: &Support) -> Result<i8, MajorityError> {
    check_dims(x, s)?;
    Ok(maj_unchecked(x, s))
}

/// `PAR(x, S) = Π_{j∈S} x_j`.
pub fn par(x: &SignVector, s: &Support) -> Result<i8, MajorityError> {
    check_dims(x, s)?;
    Ok(s.indices.iter().map(|&j| x.0[j]).product())
}

/// A real-valued function on sign vectors.
pub trait Predictor: Sync {
    fn predict(&self, x: &SignVector) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&SignVector) -> f64 + Sync,
{
    fn predict(&self, x: &SignVector) -> f64 {
        self(x)
    }
}

/// `MAJ(·, S)` as a predictor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MajorityTarget(pub Support);

impl Predictor for MajorityTarget {
    fn predict(&self, x: &SignVector) -> f64 {
        f64::from(maj_unchecked(x, &self.0))
    }
}

/// `n` i.i.d. uniform inputs; input `i` depends only on `(seed, i)`.
pub fn sample_inputs(d: usize, n: usize, seed: u64) -> Vec<SignVector> {
    sample_inputs_from_stream(d, n, seed, purpose::INPUTS)
}

pub(crate) fn sample_inputs_from_stream(d: usize, n: usize, seed: u64, stream: u64) -> Vec<SignVector> {
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, stream, i as u64);
            let mut bits = Vec::with_capacity(d);
            while bits.len() < d {
                let word: u64 = rng.random();
                let take = (d - bits.len()).min(64);
                bits.extend((0..take).map(|b| if word >> b & 1 == 1 { -1i8 } else { 1 }));
            }
            SignVector(bits)
        })
        .collect()
}

/// Training samples labeled by a hidden support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDataset {
    d: usize,
    k: usize,
    seed: u64,
    support: Support,
    inputs: Vec<SignVector>,
    labels: Vec<i8>,
}

impl LabeledDataset {
    /// Labels `inputs` with `MAJ(·, support)`.
    pub fn from_inputs(support: Support, inputs: Vec<SignVector>, seed: u64) -> Result<Self, MajorityError> {
        if inputs.is_empty() {
            return Err(MajorityError::InvalidDataset("n must be at least 1".into()));
        }
        for x in &inputs {
            check_dims(x, &support)?;
        }
        let labels = inputs.iter().map(|x| maj_unchecked(x, &support)).collect();
        Ok(Self {
            d: support.d(),
            k: support.k(),
            seed,
            support,
            inputs,
            labels,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn inputs(&self) -> &[SignVector] {
        &self.inputs
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| f64::from(y)).collect()
    }

    /// Serializes to the line format read by [`LabeledDataset::parse`].
    ///
    /// ```text
    /// d,k,seed,support
    /// 4,2,7,1 3
    /// ++--,+1
    /// ```
    ///
    /// Support indices are 1-based. Each record is the input as `+`/`-`
    /// characters followed by the label.
    pub fn to_text(&self) -> String {
        let mut out = String::from("d,k,seed,support\n");
        let support = self.support.indices().iter().map(|j| j + 1).join(" ");
        let _ = writeln!(out, "{},{},{},{}", self.d, self.k, self.seed, support);
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            let _ = writeln!(out, "{x},{}", if y > 0 { "+1" } else { "-1" });
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MajorityError> {
        let err = |line: usize, msg: &str| MajorityError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "d,k,seed,support")) => {}
            _ => return Err(err(1, "expected header `d,k,seed,support`")),
        }
        let (_, meta) = lines.next().ok_or_else(|| err(2, "missing metadata line"))?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 4 {
            return Err(err(2, "metadata needs four fields"));
        }
        let d: usize = fields[0].parse().map_err(|_| err(2, "bad d"))?;
        let k: usize = fields[1].parse().map_err(|_| err(2, "bad k"))?;
        let seed: u64 = fields[2].parse().map_err(|_| err(2, "bad seed"))?;
        let idx: Vec<usize> = fields[3]
            .split(' ')
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(2, "bad support"))?;
        let support = Support::from_one_based(d, &idx)?;
        if support.k() != k {
            return Err(err(2, "support size differs from k"));
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines {
            let (bits, label) = line.split_once(',').ok_or_else(|| err(i + 1, "expected `bits,label`"))?;
            let bits: Vec<i8> = bits
                .chars()
                .map(|c| match c {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    _ => Err(err(i + 1, "bits must be `+` or `-`")),
                })
                .collect::<Result<_, _>>()?;
            let x = SignVector::new(bits)?;
            check_dims(&x, &support)?;
            let y = match label {
                "+1" => 1,
                "-1" => -1,
                _ => return Err(err(i + 1, "label must be +1 or -1")),
            };
            if y != maj_unchecked(&x, &support) {
                return Err(err(i + 1, "label disagrees with MAJ on the stated support"));
            }
            inputs.push(x);
            labels.push(y);
        }
        if inputs.is_empty() {
            return Err(err(3, "dataset has no records"));
        }
        Ok(Self {
            d,
            k,
            seed,
            support,
            inputs,
            labels,
        })
    }
}

/// `n` uniform inputs labeled by `MAJ(·, support)`, deterministic in `seed`.
pub fn sample_dataset(d: usize, k: usize, n: usize, support: Support, seed: u64) -> Result<LabeledDataset, MajorityError> {
    if n == 0 {
        return Err(MajorityError::InvalidDataset("n must be at least 1".into()));
    }
    if support.d() != d || support.k() != k {
        return Err(MajorityError::InvalidDataset(format!(
            "support {support} does not match d = {d}, k = {k}"
        )));
    }
    LabeledDataset::from_inputs(support, sample_inputs(d, n, seed), seed)
}

/// `⟨f, g⟩_n = (1/n) Σ f(x_i) g(x_i)`.
pub fn empirical_inner(f: &dyn Predictor, g: &dyn Predictor, inputs: &[SignVector]) -> f64 {
    let sum: f64 = inputs.iter().map(|x| f.predict(x) * g.predict(x)).sum();
    sum / inputs.len() as f64
}

/// `‖f‖_n²`.
pub fn empirical_norm_sq(f: &dyn Predictor, inputs: &[SignVector]) -> f64 {
    empirical_inner(f, f, inputs)
}

/// `(1/2n) Σ (y_i − f(x_i))²`.
pub fn empirical_loss(pred: &dyn Predictor, data: &LabeledDataset) -> f64 {
    let sum: f64 = data
        .inputs
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| {
            let r = f64::from(y) - pred.predict(x);
            r * r
        })
        .sum();
    sum / (2.0 * data.n() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MseMode {
    /// Average over all `2^d` inputs.
    Exact,
    /// Average over fresh uniform inputs drawn from `seed`.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseEstimate {
    pub value: f64,
    /// Standard error of the Monte Carlo mean; `None` when exact.
    pub std_error: Option<f64>,
}

impl MseEstimate {
    pub fn is_exact(&self) -> bool {
        self.std_error.is_none()
    }
}

/// Visits all `2^d` sign vectors in mask order.
pub fn all_inputs(d: usize) -> Result<Vec<SignVector>, MajorityError> {
    if d > EXACT_DIMENSION_LIMIT {
        return Err(MajorityError::ExactTooLarge {
            d,
            limit: EXACT_DIMENSION_LIMIT,
        });
    }
    Ok((0..1u64 << d).map(|mask| SignVector::from_mask(d, mask)).collect())
}

/// `E_x[(MAJ(x, S) − f(x))²]`, without the ½ factor.
pub fn population_mse(pred: &dyn Predictor, s: &Support, mode: MseMode) -> Result<MseEstimate, MajorityError> {
    let d = s.d();
    let sq_err = |x: &SignVector| {
        let r = f64::from(maj_unchecked(x, s)) - pred.predict(x);
        r * r
    };
    match mode {
        MseMode::Exact => {
            let inputs = all_inputs(d)?;
            let sum: f64 = inputs.iter().map(sq_err).sum();
            Ok(MseEstimate {
                value: sum / inputs.len() as f64,
                std_error: None,
            })
        }
        MseMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(MajorityError::InvalidDataset("Monte Carlo needs at least 2 samples".into()));
            }
            let inputs = sample_inputs_from_stream(d, samples, seed, purpose::MONTE_CARLO);
            let errs: Vec<f64> = inputs.iter().map(sq_err).collect();
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);
            Ok(MseEstimate {
                value: mean,
                std_error: Some((var / n).sqrt()),
            })
        }
    }
}

/// Projection onto `[−1, 1]`.
pub fn clip(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Exhaustively tests `MAJ(x, S) = x_1⋯x_d · MAJ(x, S^c)` over every input
/// and every k-support, returning each violating pair.
pub fn complement_identity_check(d: usize, k: usize) -> Result<Vec<(SignVector, Support)>, MajorityError> {
    if d > 14 || k == 0 || k >= d {
        return Err(MajorityError::InvalidSupport(format!(
            "complement check needs d <= 14 and 1 <= k <= d-1, got d = {d}, k = {k}"
        )));
    }
    let supports = binom(d as u64, k as u64);
    let needed: u128 = (supports * (1u64 << d)).try_into().unwrap_or(u128::MAX);
    if needed > u128::from(COMPLEMENT_CHECK_CAP) {
        return Err(MajorityError::CapExceeded {
            needed,
            cap: COMPLEMENT_CHECK_CAP,
        });
    }
    let inputs = all_inputs(d)?;
    let mut bad = Vec::new();
    for idx in (0..d).combinations(k) {
        let s = Support::new(d, idx)?;
        let sc = s.complement().expect("k < d");
        for x in &inputs {
            if maj_unchecked(x, &s) != x.product() * maj_unchecked(x, &sc) {
                bad.push((x.clone(), s.clone()));
            }
        }
    }
    Ok(bad)
}
