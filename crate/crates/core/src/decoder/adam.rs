//! Adam with bias correction and a step-decay learning-rate schedule.

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every` steps; 0 disables decay.
    pub decay_every: u64,
    pub decay_factor: f64,
    /// Optional L2 penalty folded into the gradient. Off by default.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_every: 0,
            decay_factor: 0.5,
            weight_decay: 0.0,
        }
    }

    pub fn with_decay(mut self, every: u64, factor: f64) -> Self {
        self.decay_every = every;
        self.decay_factor = factor;
        self
    }

    /// Learning rate used by the 1-based step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.decay_every == 0 || step == 0 {
            return self.lr;
        }
        let events = (step - 1) / self.decay_every;
        self.lr * self.decay_factor.powi(events.min(i32::MAX as u64) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate the next call to [`AdamState::step`] will use.
    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.step + 1)
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Config(format!(
                "adam: {} parameter blocks, {} gradients, {} moment blocks",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Config(
                    "adam: parameter/gradient shape mismatch".into(),
                ));
            }
        }
        self.step += 1;
        let c = self.config;
        let lr = c.lr_at(self.step);
        let t = self.step.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i] + c.weight_decay * p.data[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
