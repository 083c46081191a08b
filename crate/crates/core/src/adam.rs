//! Adam optimizer state and update rule.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Per-parameter moment estimates plus hyperparameters.
///
/// Moments are stored in the same order as the parameter list handed to
/// [`AdamState::new`]; `step` must be called with that same ordering.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl AdamState {
    /// Conventional defaults apart from the caller-chosen learning rate.
    pub fn new(learning_rate: f64, params: &[Matrix]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
            second_moment: params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn first_moment(&self, k: usize) -> &Matrix {
        &self.first_moment[k]
    }

    pub fn second_moment(&self, k: usize) -> &Matrix {
        &self.second_moment[k]
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) {
        assert_eq!(
            params.len(),
            self.first_moment.len(),
            "parameter count {} does not match optimizer state {}",
            params.len(),
            self.first_moment.len()
        );
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);

        for k in 0..params.len() {
            assert_eq!(
                params[k].shape(),
                grads[k].shape(),
                "param {k} shape {:?} does not match grad shape {:?}",
                params[k].shape(),
                grads[k].shape()
            );
            let m = self.first_moment[k].data_mut();
            let v = self.second_moment[k].data_mut();
            let p = params[k].data_mut();
            let g = grads[k].data();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Matrix::filled(2, 2, 1.5)];
        let grads = vec![Matrix::zeros(2, 2)];
        let mut state = AdamState::new(0.1, &params);
        let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
        state.step(&mut refs, &grads);
        assert_eq!(params[0], Matrix::filled(2, 2, 1.5));
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With g = 1 at t = 1, bias correction gives m_hat = 1, v_hat = 1,
        // so the update is lr / (1 + eps) which is 0.1 to within 1e-8.
        let mut params = vec![Matrix::filled(1, 1, 0.0)];
        let grads = vec![Matrix::filled(1, 1, 1.0)];
        let mut state = AdamState::new(0.1, &params);
        let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
        state.step(&mut refs, &grads);
        let moved = -params[0].get(0, 0);
        assert!((moved - 0.1).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn descends_a_quadratic() {
        // loss = x^2, grad = 2x
        let mut params = vec![Matrix::filled(1, 1, 2.0)];
        let mut state = AdamState::new(0.1, &params);
        let loss = |p: &Matrix| p.get(0, 0) * p.get(0, 0);
        let l0 = loss(&params[0]);
        for _ in 0..2 {
            let grads = vec![params[0].scale(2.0)];
            let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
            state.step(&mut refs, &grads);
        }
        assert!(loss(&params[0]) < l0);
        assert_eq!(state.step_count, 2);
    }

    #[test]
    fn moments_decay_toward_zero_without_gradient() {
        let mut params = vec![Matrix::filled(1, 1, 0.0)];
        let mut state = AdamState::new(0.1, &params);
        let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
        state.step(&mut refs, &[Matrix::filled(1, 1, 1.0)]);
        let m1 = state.first_moment(0).get(0, 0);
        let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
        state.step(&mut refs, &[Matrix::zeros(1, 1)]);
        let m2 = state.first_moment(0).get(0, 0);
        assert!(m2.abs() < m1.abs());
        assert!(state.second_moment(0).get(0, 0) >= 0.0);
    }

    #[test]
    #[should_panic(expected = "does not match grad shape")]
    fn shape_mismatch_panics() {
        let mut params = vec![Matrix::zeros(2, 2)];
        let mut state = AdamState::new(0.1, &params);
        let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
        state.step(&mut refs, &[Matrix::zeros(2, 3)]);
    }
}
