use crate::majority::SignVector;

use super::DifferentiableModel;

/// `f_θ(x) = ⟨θ, x⟩` with `∇f_θ(x) = x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearProbe {
    d: usize,
}

impl LinearProbe {
    pub fn new(d: usize) -> Self {
        Self { d }
    }
}

impl DifferentiableModel for LinearProbe {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn num_params(&self) -> usize {
        self.d
    }

    fn name(&self) -> &'static str {
        "linear"
    }

    fn predict(&self, params: &[f64], x: &SignVector) -> f64 {
        params.iter().zip(x.bits()).map(|(t, &b)| t * f64::from(b)).sum()
    }

    fn predict_and_grad(&self, params: &[f64], x: &SignVector, grad: &mut [f64]) -> f64 {
        for (g, &b) in grad.iter_mut().zip(x.bits()) {
            *g = f64::from(b);
        }
        self.predict(params, x)
    }
}
