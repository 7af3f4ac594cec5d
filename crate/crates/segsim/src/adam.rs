//! Adam optimizer over a flat parameter vector, with the standard
//! bias-corrected first and second moment estimates.

use crate::nn::QlearnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    /// Fresh state for `param_count` parameters with the usual constants
    /// (beta1 0.9, beta2 0.999, epsilon 1e-8).
    pub fn new(param_count: usize, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// Completed update steps.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One update in place:
    ///
    /// ```text
    /// m <- b1*m + (1-b1)*g        mhat = m / (1 - b1^t)
    /// v <- b2*v + (1-b2)*g^2      vhat = v / (1 - b2^t)
    /// p <- p - lr * mhat / (sqrt(vhat) + eps)
    /// ```
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), QlearnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(QlearnError::ShapeMismatch { got: grads.len(), want: self.m.len() });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
