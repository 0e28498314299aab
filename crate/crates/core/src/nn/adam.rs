use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::nn::matrix::DenseMatrix;

/// Adam optimizer state over an ordered list of parameter matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<DenseMatrix>,
    second_moment: Vec<DenseMatrix>,
}

impl AdamState {
    /// Zero-initialized state for parameters of the given shapes, with the
    /// usual defaults `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
    pub fn new(learning_rate: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[DenseMatrix]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(shape_err!(
                "adam: {} params, {} grads, {} state slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            ));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[k].shape() {
                return Err(shape_err!(
                    "adam slot {k}: param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    self.first_moment[k].shape()
                ));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[k].as_mut_slice();
            let v = self.second_moment[k].as_mut_slice();
            for (((x, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [&mut DenseMatrix], grads: &[DenseMatrix]) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = DenseMatrix::from_rows(&[[1.5, -2.0]]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(0.1, &[(1, 2)]);
        for _ in 0..3 {
            st.step(&mut [&mut p], &[DenseMatrix::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 after bias correction, so Δ = η / (1 + ε)
        let mut p = DenseMatrix::scalar(1.0);
        let mut st = AdamState::new(0.001, &[(1, 1)]);
        st.step(&mut [&mut p], &[DenseMatrix::scalar(1.0)]).unwrap();
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p.item().unwrap() - expected).abs() < 1e-15);
        assert!((p.item().unwrap() - 0.999).abs() < 1e-9);
    }

    #[test]
    fn repeated_steps_decrease_monotonically() {
        let mut p = DenseMatrix::scalar(1.0);
        let mut st = AdamState::new(0.001, &[(1, 1)]);
        let mut last = 1.0;
        for _ in 0..2 {
            st.step(&mut [&mut p], &[DenseMatrix::scalar(1.0)]).unwrap();
            let now = p.item().unwrap();
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = DenseMatrix::zeros(2, 2);
        let mut st = AdamState::new(0.1, &[(2, 2)]);
        assert!(st.step(&mut [&mut p], &[DenseMatrix::zeros(1, 2)]).is_err());
        assert!(st.step(&mut [&mut p], &[]).is_err());
        assert_eq!(st.step_count(), 0);
    }
}
