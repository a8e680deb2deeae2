use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-2 }
    }
}

/// Adaptive moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW<S = f64> {
    config: AdamWConfig,
    m: Vec<S>,
    v: Vec<S>,
    step: u64,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(config: AdamWConfig, params: usize) -> Self {
        Self { config, m: vec![S::zero(); params], v: vec![S::zero(); params], step: 0 }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [S], grads: &[S]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(FtgError::LengthMismatch { expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(FtgError::NonFinite { index });
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let lr = S::lit(c.learning_rate);
        let bc1 = S::one() - S::lit(c.beta1.powi(self.step as i32));
        let bc2 = S::one() - S::lit(c.beta2.powi(self.step as i32));
        let eps = S::lit(c.epsilon);
        let decay = S::one() - lr * S::lit(c.weight_decay);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
