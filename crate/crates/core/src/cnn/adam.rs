//! Adam optimizer with bias correction.
//!
//! Standard update per parameter `p` with gradient `g` at step `t`:
//!
//! ```text
//! m <- b1 m + (1 - b1) g          m_hat = m / (1 - b1^t)
//! v <- b2 v + (1 - b2) g^2        v_hat = v / (1 - b2^t)
//! p <- p - lr * m_hat / (sqrt(v_hat) + eps)
//! ```
//!
//! Defaults are the community-standard `lr 1e-3, b1 0.9, b2 0.999,
//! eps 1e-8`. The very first step from a fresh state moves each parameter
//! by exactly `-lr * g / (|g| + eps)`.

use serde::{Deserialize, Serialize};

use super::{CnnModel, Gradients};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Gradients,
    second_moment: Gradients,
    step: u64,
}

impl AdamState {
    /// Fresh state (zero moments) shaped like `model`.
    pub fn new(model: &CnnModel, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
            step: 0,
        }
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// The hyperparameters in effect.
    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Applies one Adam update of `model` in place.
    ///
    /// # Panics
    ///
    /// Panics if `grads` is not shaped like `model`.
    pub fn apply(&mut self, model: &mut CnnModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let m_corr = 1.0 - c.beta1.powi(t);
        let v_corr = 1.0 - c.beta2.powi(t);

        let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            assert_eq!(params.len(), g.len(), "gradient shape mismatch");
            for i in 0..params.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / m_corr;
                let v_hat = v[i] / v_corr;
                params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        };

        assert_eq!(
            model.weights.len(),
            grads.weights.len(),
            "layer count mismatch"
        );
        for layer in 0..model.weights.len() {
            update(
                &mut model.weights[layer],
                &grads.weights[layer],
                &mut self.first_moment.weights[layer],
                &mut self.second_moment.weights[layer],
            );
            update(
                &mut model.biases[layer],
                &grads.biases[layer],
                &mut self.first_moment.biases[layer],
                &mut self.second_moment.biases[layer],
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::CnnStructure;

    fn tiny_model() -> CnnModel {
        let s = CnnStructure::new(vec![3], vec![1]).unwrap();
        CnnModel::from_parameters(s, vec![vec![1.0, -0.5, 0.25]], vec![vec![0.1]])
    }

    // 1. A zero gradient from a fresh state leaves parameters untouched
    //    but advances the step counter.
    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut model = tiny_model();
        let reference = model.clone();
        let grads = Gradients::zeros_like(&model);
        let mut state = AdamState::new(&model, AdamConfig::default());
        state.apply(&mut model, &grads);
        assert_eq!(model, reference);
        assert_eq!(state.step_count(), 1);
    }

    // 2. The first step from a fresh state is exactly
    //    -lr * g / (|g| + eps) per parameter.
    #[test]
    fn first_step_closed_form() {
        let mut model = tiny_model();
        let mut grads = Gradients::zeros_like(&model);
        grads.weights[0] = vec![0.5, -2.0, 0.0];
        grads.biases[0] = vec![1e-3];
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(&model, cfg);
        let before_w = model.weights()[0].clone();
        let before_b = model.biases()[0][0];
        state.apply(&mut model, &grads);
        for i in 0..3 {
            let g: f64 = grads.weights[0][i];
            let expected = before_w[i] - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!(
                (model.weights()[0][i] - expected).abs() < 1e-15,
                "weight {i}"
            );
        }
        let g = grads.biases[0][0];
        let expected = before_b - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
        assert!((model.biases()[0][0] - expected).abs() < 1e-15);
    }

    // 3. A constant positive gradient keeps moving the parameter down,
    //    by roughly lr per step once bias correction settles.
    #[test]
    fn constant_gradient_descends() {
        let mut model = tiny_model();
        let mut grads = Gradients::zeros_like(&model);
        grads.weights[0] = vec![0.7, 0.7, 0.7];
        let mut state = AdamState::new(&model, AdamConfig::default());
        let start = model.weights()[0][0];
        let mut previous = start;
        for _ in 0..100 {
            state.apply(&mut model, &grads);
            let now = model.weights()[0][0];
            assert!(now < previous, "parameter must decrease every step");
            previous = now;
        }
        let moved = start - model.weights()[0][0];
        assert!(
            (moved - 0.1).abs() < 0.01,
            "100 steps at lr 1e-3 should move ~0.1, moved {moved}"
        );
        assert_eq!(state.step_count(), 100);
    }

    // 4. Shape mismatches are programming errors.
    #[test]
    #[should_panic(expected = "gradient shape mismatch")]
    fn shape_mismatch_panics() {
        let mut model = tiny_model();
        let mut grads = Gradients::zeros_like(&model);
        grads.weights[0] = vec![0.0; 2];
        let mut state = AdamState::new(&model, AdamConfig::default());
        state.apply(&mut model, &grads);
    }
}
