use std::collections::BTreeMap;

use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// Adam moment estimates for every parameter in a store.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState { beta1, beta2, eps, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.second.get(name).map(Vec::as_slice)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub lr: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub weight_decay: f64,
}

impl StepConfig {
    pub fn new(lr: f64) -> Self {
        StepConfig { lr, clip_lo: -5.0, clip_hi: 5.0, weight_decay: 0.0 }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

/// Clips every gradient component into `[clip_lo, clip_hi]`, adds the L2
/// decay term `weight_decay * param`, then applies one bias-corrected Adam
/// update. Gradients are left in place; callers zero them between steps.
pub fn clip_and_adam_step(params: &mut ParamStore, state: &mut AdamState, cfg: StepConfig) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if cfg.clip_lo > cfg.clip_hi {
        return Err(Error::Config(format!("clip range [{}, {}] is empty", cfg.clip_lo, cfg.clip_hi)));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);

    for (name, tensor) in params.iter_mut() {
        if !tensor.requires_grad {
            continue;
        }
        let n = tensor.len();
        let m = state.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let grad: Vec<f64> = tensor.grad().to_vec();
        let values = tensor.values_mut();
        for i in 0..n {
            let g = grad[i].clamp(cfg.clip_lo, cfg.clip_hi) + cfg.weight_decay * values[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Piecewise-constant learning-rate schedule: `base` until `decay_start`,
/// then multiplied by `factor` once at `decay_start` and again every
/// `decay_every` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_start: u64,
    pub decay_every: u64,
    pub factor: f64,
}

impl LrSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if step < self.decay_start || self.decay_every == 0 {
            return self.base;
        }
        let decays = (step - self.decay_start) / self.decay_every + 1;
        self.base * self.factor.powi(decays as i32)
    }
}
