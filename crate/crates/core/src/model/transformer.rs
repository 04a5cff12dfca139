//! Single-layer transformer whose attention depends only on positions.
//!
//! Tokens `1..d` carry the input bits and tokens `d+1..ℓ` (with `ℓ = d+k−1`)
//! are computed one after another:
//!
//! ```text
//! σ_j(w_m) = exp(w_{j,m}) / Σ_{α<m} exp(w_{α,m})
//! ẑ_m      = Σ_{j<m} σ_j(w_m) · s_j
//! x̂_m      = φ(ẑ_m)
//! ```
//!
//! The prediction is the last token `x̂_ℓ`. The sources `s_j` are either the
//! raw embeddings (input bits, zeros for the dummy tokens) or the already
//! computed tokens, see [`RecursionMode`]. Entries `w_{j,m}` with `j ≥ m` or
//! `m ≤ d` are masked and never read.
//!
//! Indices in code are 0-based: token `m` is computed iff `d ≤ m < ℓ`.

use ndarray::Array2;

use crate::majority::SignVector;

use super::{DifferentiableModel, Link, ModelError};

/// What the attention sum at a computed token reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RecursionMode {
    /// Raw embeddings: input bits for `j < d`, zero for dummy tokens.
    RawTokens,
    /// Previously computed token values `x̂_j`.
    #[default]
    ComputedTokens,
}

impl RecursionMode {
    pub fn name(self) -> &'static str {
        match self {
            RecursionMode::RawTokens => "raw_tokens",
            RecursionMode::ComputedTokens => "computed_tokens",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "raw_tokens" | "raw" => Some(RecursionMode::RawTokens),
            "computed_tokens" | "computed" => Some(RecursionMode::ComputedTokens),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    d: usize,
    k: usize,
    pub recursion: RecursionMode,
    pub link: Link,
}

impl ModelConfig {
    pub fn new(d: usize, k: usize) -> Result<Self, ModelError> {
        if d == 0 || k == 0 || k > d {
            return Err(ModelError::InvalidConfig(format!("need 1 <= k <= d, got d = {d}, k = {k}")));
        }
        Ok(Self {
            d,
            k,
            recursion: RecursionMode::default(),
            link: Link::default(),
        })
    }

    pub fn with_recursion(mut self, recursion: RecursionMode) -> Self {
        self.recursion = recursion;
        self
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Token count `ℓ = d + k − 1`.
    pub fn ell(&self) -> usize {
        self.d + self.k - 1
    }

    pub fn is_unmasked(&self, j: usize, m: usize) -> bool {
        m >= self.d && m < self.ell() && j < m
    }

    /// Unmasked `(j, m)` positions in row-major order.
    pub fn unmasked_entries(&self) -> Vec<(usize, usize)> {
        let ell = self.ell();
        (0..ell)
            .flat_map(|j| (0..ell).map(move |m| (j, m)))
            .filter(|&(j, m)| self.is_unmasked(j, m))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        (self.d..self.ell()).sum()
    }
}

/// The full `ℓ × ℓ` weight matrix, row `j` (key) by column `m` (query).
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerParams {
    ell: usize,
    w: Vec<f64>,
}

impl TransformerParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let ell = config.ell();
        Self { ell, w: vec![0.0; ell * ell] }
    }

    /// Places a flat vector of unmasked entries (row-major) into the matrix.
    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self, ModelError> {
        if flat.len() != config.num_params() {
            return Err(ModelError::DimensionMismatch {
                expected: config.num_params(),
                actual: flat.len(),
            });
        }
        let mut p = Self::zeros(config);
        for (&(j, m), &v) in config.unmasked_entries().iter().zip(flat) {
            p.set(j, m, v);
        }
        Ok(p)
    }

    pub fn to_flat(&self, config: &ModelConfig) -> Vec<f64> {
        config.unmasked_entries().iter().map(|&(j, m)| self.get(j, m)).collect()
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn get(&self, j: usize, m: usize) -> f64 {
        self.w[j * self.ell + m]
    }

    pub fn set(&mut self, j: usize, m: usize, v: f64) {
        self.w[j * self.ell + m] = v;
    }
}

/// Result of a forward pass on one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub prediction: f64,
    /// All `ℓ` token values; the first `d` are the input bits.
    pub tokens: Vec<f64>,
    /// `ẑ_m` for each computed token, indexed by `m − d`.
    pub pre_activations: Vec<f64>,
    /// Attention weights over `j < m` for each computed token, indexed by `m − d`.
    pub weights: Vec<Vec<f64>>,
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

fn source(config: &ModelConfig, tokens: &[f64], j: usize) -> f64 {
    match config.recursion {
        RecursionMode::ComputedTokens => tokens[j],
        RecursionMode::RawTokens if j < config.d => tokens[j],
        RecursionMode::RawTokens => 0.0,
    }
}

fn run_forward(config: &ModelConfig, weight: impl Fn(usize, usize) -> f64, x: &SignVector) -> Forward {
    let (d, ell) = (config.d, config.ell());
    let mut tokens = Vec::with_capacity(ell);
    tokens.extend(x.bits().iter().map(|&b| f64::from(b)));
    let mut pre_activations = Vec::with_capacity(ell - d);
    let mut weights = Vec::with_capacity(ell - d);
    for m in d..ell {
        let mut a: Vec<f64> = (0..m).map(|j| weight(j, m)).collect();
        softmax(&mut a);
        let z: f64 = a.iter().enumerate().map(|(j, aj)| aj * source(config, &tokens, j)).sum();
        tokens.push(config.link.phi(z));
        pre_activations.push(z);
        weights.push(a);
    }
    Forward {
        prediction: tokens[ell - 1],
        tokens,
        pre_activations,
        weights,
    }
}

/// Reverse pass; `emit(j, m, ∂pred/∂w_{j,m})` is called for every unmasked entry.
fn run_backward(config: &ModelConfig, fwd: &Forward, mut emit: impl FnMut(usize, usize, f64)) {
    let (d, ell) = (config.d, config.ell());
    let mut adjoint = vec![0.0; ell];
    adjoint[ell - 1] = 1.0;
    for m in (d..ell).rev() {
        let z = fwd.pre_activations[m - d];
        let a = &fwd.weights[m - d];
        let z_bar = adjoint[m] * config.link.phi_prime(z);
        for (j, &aj) in a.iter().enumerate() {
            emit(j, m, z_bar * aj * (source(config, &fwd.tokens, j) - z));
            if config.recursion == RecursionMode::ComputedTokens && j >= d {
                adjoint[j] += z_bar * aj;
            }
        }
    }
}

fn check_input(config: &ModelConfig, x: &SignVector) -> Result<(), ModelError> {
    if x.dim() != config.d {
        return Err(ModelError::DimensionMismatch {
            expected: config.d,
            actual: x.dim(),
        });
    }
    Ok(())
}

pub fn forward(params: &TransformerParams, config: &ModelConfig, x: &SignVector) -> Result<Forward, ModelError> {
    check_input(config, x)?;
    Ok(run_forward(config, |j, m| params.get(j, m), x))
}

/// `∂ prediction / ∂ w_{j,m}` over unmasked entries, row-major.
pub fn grad_prediction(params: &TransformerParams, config: &ModelConfig, x: &SignVector) -> Result<Vec<f64>, ModelError> {
    let model = TransformerModel::new(*config);
    let flat = params.to_flat(config);
    check_input(config, x)?;
    let mut g = vec![0.0; config.num_params()];
    model.predict_and_grad(&flat, x, &mut g);
    Ok(g)
}

/// Softmax weights `σ_j(w_m)` over `j < m` for a computed token `m`.
pub fn attention_weights(params: &TransformerParams, config: &ModelConfig, m: usize) -> Result<Vec<f64>, ModelError> {
    if m < config.d || m >= config.ell() {
        return Err(ModelError::IndexError {
            m,
            lo: config.d,
            hi: config.ell(),
        });
    }
    let mut a: Vec<f64> = (0..m).map(|j| params.get(j, m)).collect();
    softmax(&mut a);
    Ok(a)
}

/// Runs all samples at once with `ℝ^n` token vectors; `result[j][i]` is token
/// `j` of sample `i`.
pub fn forward_stacked(
    params: &TransformerParams,
    config: &ModelConfig,
    inputs: &[SignVector],
) -> Result<Vec<Vec<f64>>, ModelError> {
    for x in inputs {
        check_input(config, x)?;
    }
    let (d, ell, n) = (config.d, config.ell(), inputs.len());
    let mut tokens: Vec<Vec<f64>> = (0..d)
        .map(|j| inputs.iter().map(|x| f64::from(x.get(j))).collect())
        .collect();
    for m in d..ell {
        let a = attention_weights(params, config, m)?;
        let mut z = vec![0.0; n];
        for (j, &aj) in a.iter().enumerate() {
            if config.recursion == RecursionMode::RawTokens && j >= d {
                continue;
            }
            for (zi, tj) in z.iter_mut().zip(&tokens[j]) {
                *zi += aj * tj;
            }
        }
        tokens.push(z.into_iter().map(|v| config.link.phi(v)).collect());
    }
    Ok(tokens)
}

/// Materializes the `K^⊤Q` (`L × L`, `L = n + ℓ`) and `V` (`n × L`) blocks.
/// Masked positions of `W` appear as `−∞`.
pub fn attention_blocks(params: &TransformerParams, config: &ModelConfig, n: usize) -> (Array2<f64>, Array2<f64>) {
    let ell = config.ell();
    let big_l = n + ell;
    let mut kq = Array2::<f64>::zeros((big_l, big_l));
    for j in 0..ell {
        for m in 0..ell {
            kq[[n + j, n + m]] = if config.is_unmasked(j, m) {
                params.get(j, m)
            } else {
                f64::NEG_INFINITY
            };
        }
    }
    let mut v = Array2::<f64>::zeros((n, big_l));
    for i in 0..n {
        v[[i, i]] = 1.0;
    }
    (kq, v)
}

/// The transformer as a [`DifferentiableModel`] over its unmasked weights.
#[derive(Clone, Debug)]
pub struct TransformerModel {
    config: ModelConfig,
    /// Flat parameter index of `(j, m)`, row-major over the `ℓ × ℓ` grid.
    index: Vec<usize>,
}

impl TransformerModel {
    pub fn new(config: ModelConfig) -> Self {
        let ell = config.ell();
        let mut index = vec![usize::MAX; ell * ell];
        for (i, (j, m)) in config.unmasked_entries().into_iter().enumerate() {
            index[j * ell + m] = i;
        }
        Self { config, index }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn flat_index(&self, j: usize, m: usize) -> usize {
        self.index[j * self.config.ell() + m]
    }

    pub fn forward_flat(&self, params: &[f64], x: &SignVector) -> Forward {
        run_forward(&self.config, |j, m| params[self.flat_index(j, m)], x)
    }
}

impl DifferentiableModel for TransformerModel {
    fn input_dim(&self) -> usize {
        self.config.d
    }

    fn num_params(&self) -> usize {
        self.config.num_params()
    }

    fn name(&self) -> &'static str {
        "transformer"
    }

    fn predict(&self, params: &[f64], x: &SignVector) -> f64 {
        self.forward_flat(params, x).prediction
    }

    fn predict_and_grad(&self, params: &[f64], x: &SignVector, grad: &mut [f64]) -> f64 {
        let fwd = self.forward_flat(params, x);
        run_backward(&self.config, &fwd, |j, m, g| grad[self.flat_index(j, m)] = g);
        fwd.prediction
    }
}
