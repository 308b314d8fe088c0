use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, LayerGradient, Matrix, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_learning_rate(0.001)
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// First/second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step_count: u64,
    pub hyper: AdamConfig,
}

fn zeros_like(params: &ModelParams) -> Gradients {
    Gradients {
        layers: params
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                biases: vec![0.0; l.biases.len()],
            })
            .collect(),
    }
}

impl AdamState {
    pub fn new(params: &ModelParams, hyper: AdamConfig) -> Self {
        Self { first_moment: zeros_like(params), second_moment: zeros_like(params), step_count: 0, hyper }
    }
}

fn shapes_agree(params: &ModelParams, g: &Gradients) -> bool {
    params.layers.len() == g.layers.len()
        && params
            .layers
            .iter()
            .zip(&g.layers)
            .all(|(p, g)| p.weights.shape() == g.weights.shape() && p.biases.len() == g.biases.len())
}

fn update(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], h: &AdamConfig, c1: f64, c2: f64) {
    for i in 0..theta.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
    }
}

/// One bias-corrected Adam update, in place.
///
/// Nothing is modified when the gradient is non-finite or mis-shaped.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !shapes_agree(params, grads) || !shapes_agree(params, &state.first_moment) {
        return Err(Error::Shape("gradient or optimizer state does not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let h = state.hyper;
    let t = (state.step_count + 1) as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);

    for (i, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[i];
        let m = &mut state.first_moment.layers[i];
        let v = &mut state.second_moment.layers[i];
        update(
            layer.weights.as_mut_slice(),
            g.weights.as_slice(),
            m.weights.as_mut_slice(),
            v.weights.as_mut_slice(),
            &h,
            c1,
            c2,
        );
        update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases, &h, c1, c2);
    }
    state.step_count += 1;
    if !params.is_finite() {
        return Err(Error::Numeric(format!("parameters became non-finite at Adam step {}", state.step_count)));
    }
    Ok(())
}
