use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamId, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates for one tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(
    param: &mut [f32],
    grad: &[f32],
    state: &mut AdamState,
    t: u64,
    lr: f32,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam step counter starts at 1".into()));
    }
    if grad.len() != param.len() || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::InvalidArgument(format!(
            "adam shape mismatch: {} params, {} grads, {} moments",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    let (b1, b2) = (cfg.beta1 as f64, cfg.beta2 as f64);
    let c1 = 1.0 - b1.powi(t.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(t.min(i32::MAX as u64) as i32);
    for i in 0..param.len() {
        let g = grad[i] as f64;
        let m = b1 * state.m[i] as f64 + (1.0 - b1) * g;
        let v = b2 * state.v[i] as f64 + (1.0 - b2) * g * g;
        state.m[i] = m as f32;
        state.v[i] = v as f32;
        let update = lr as f64 * (m / c1) / ((v / c2).sqrt() + cfg.epsilon as f64);
        param[i] = (param[i] as f64 - update) as f32;
    }
    Ok(())
}

/// Adam over a [`ParameterStore`]; tensors in frozen partitions are never touched.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f32,
    t: u64,
    states: BTreeMap<ParamId, AdamState>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, lr: f32) -> Self {
        Adam { cfg, lr, t: 0, states: BTreeMap::new() }
    }

    pub fn learning_rate(&self) -> f32 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParameterStore, grads: &Gradients) -> Result<()> {
        self.t += 1;
        for (id, g) in grads.params() {
            if !store.requires_grad(id) {
                continue;
            }
            if g.shape() != store.get(id).shape() {
                return Err(Error::shape(store.get(id).shape(), g.shape()));
            }
            let state = self.states.entry(id).or_insert_with(|| AdamState::new(g.numel()));
            adam_step(store.get_mut(id).data_mut(), g.data(), state, self.t, self.lr, &self.cfg)?;
        }
        Ok(())
    }
}
