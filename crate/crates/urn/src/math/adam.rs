//! Adam optimizer with bias correction.

use crate::error::{Result, UrnError};

/// Optimizer state for one flat parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Standard defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(param_len: usize, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update, applied to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(UrnError::shape(
                "adam_step",
                format!(
                    "state holds {} parameters, got params {} / grads {}",
                    self.first_moment.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(UrnError::Numeric(format!(
                "non-finite gradient at index {bad}: {}",
                grads[bad]
            )));
        }
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let corr1 = 1.0 - b1.powi(self.step as i32);
        let corr2 = 1.0 - b2.powi(self.step as i32);
        let eps = self.epsilon;
        let lr = self.learning_rate;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity_on_params() {
        let mut state = AdamState::new(3, 0.01);
        let mut params = vec![1.0, -2.0, 0.5];
        let orig = params.clone();
        for _ in 0..50 {
            state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert_eq!(params, orig);
    }

    #[test]
    fn single_step_closed_form_with_zero_betas() {
        // With beta1 = beta2 = 0 the first step is -lr * g / (|g| + eps).
        let lr = 0.05;
        let g = -3.7;
        let mut state = AdamState::new(1, lr).with_betas(0.0, 0.0);
        let mut params = vec![10.0];
        state.step(&mut params, &[g]).unwrap();
        let expected = 10.0 - lr * g / (g.abs() + 1e-8);
        assert!((params[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = w^2, gradient 2w; 5000 steps at lr 1e-2 must reach |w| < 1e-3.
        let mut state = AdamState::new(1, 1e-2);
        let mut w = vec![5.0];
        for _ in 0..5000 {
            let g = 2.0 * w[0];
            state.step(&mut w, &[g]).unwrap();
        }
        assert!(w[0].abs() < 1e-3, "w = {}", w[0]);
    }

    #[test]
    fn non_finite_gradient_reports_first_offending_index() {
        let mut state = AdamState::new(4, 0.01);
        let mut params = vec![0.0; 4];
        let err = state
            .step(&mut params, &[0.0, 1.0, f64::NAN, f64::INFINITY])
            .unwrap_err()
            .to_string();
        assert!(err.contains("index 2"), "{err}");
    }

    #[test]
    fn step_counter_increments() {
        let mut state = AdamState::new(1, 0.1);
        let mut p = vec![1.0];
        state.step(&mut p, &[0.5]).unwrap();
        state.step(&mut p, &[0.5]).unwrap();
        assert_eq!(state.step_count(), 2);
    }
}
