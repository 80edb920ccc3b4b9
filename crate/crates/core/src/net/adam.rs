use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam hyper-parameters with decoupled weight decay and a step-halving
/// learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Halve the learning rate every this many steps; 0 disables halving.
    pub halve_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            halve_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            steps: 0,
        }
    }

    /// Completed steps.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Learning rate the next step will use: `lr * 2^-floor(t / period)`.
    pub fn current_learning_rate(&self) -> f64 {
        let halvings = match self.config.halve_every {
            0 => 0,
            p => self.steps / p,
        };
        self.config.learning_rate * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::Contract(format!(
                "Adam state has length {}, got {} parameters and {} gradient entries",
                self.first_moment.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {pos} is {}", grad[pos])));
        }
        let c = self.config;
        let lr = self.current_learning_rate();
        self.steps += 1;
        let t = self.steps.min(i32::MAX as u64) as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - lr * c.weight_decay;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *p *= decay;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}
