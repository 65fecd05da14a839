//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One Adam update. Parameters without a gradient entry are treated as
/// having zero gradient. A non-finite gradient aborts before anything is
/// modified.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    if state.m.len() != store.len() {
        return Err(Error::shape("adam_step", &[store.len()], &[state.m.len()]));
    }
    for (id, g) in grads.iter() {
        g.ensure_shape("adam_step gradient", store.get(id).shape())?;
        g.ensure_finite("adam_step gradient")?;
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let params = store.tensors_mut();
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads.get(crate::params::ParamId(i));
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for j in 0..p.len() {
            let gj = g.map_or(0.0, |g| g.data()[j]);
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.data_mut()[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
