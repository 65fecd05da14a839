//! Action-selection rules.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Network, Noise};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Index of the largest entry, lowest index on ties.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// Greedy on `q` with probability `1 - epsilon`, uniform otherwise.
pub fn select_egreedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::InvalidArgument("no actions to choose from".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.random_bool(epsilon) {
        Ok(rng.random_range(0..q.len()))
    } else {
        Ok(argmax(q))
    }
}

/// Linear schedule from `start` at dialogue 0 to `end` at `horizon`, flat after.
pub fn linear_epsilon(start: f64, end: f64, dialogue: usize, horizon: usize) -> f64 {
    if horizon == 0 {
        return end;
    }
    let f = (dialogue as f64 / horizon as f64).min(1.0);
    start + (end - start) * f
}

fn row(belief: &[f64]) -> Tensor {
    Tensor::vector(belief.to_vec())
}

/// One stochastic forward pass through head 0, then greedy on the sample.
pub fn select_thompson<R: Rng + ?Sized>(net: &Network, store: &ParamStore, belief: &[f64], rng: &mut R) -> Result<usize> {
    if !net.is_stochastic() {
        return Err(Error::UnsupportedMode("Thompson sampling needs a stochastic network".into()));
    }
    let noise = net.sample_noise(1, rng)?;
    select_with_noise(net, store, belief, &noise)
}

/// Greedy under a fixed noise draw.
pub fn select_with_noise(net: &Network, store: &ParamStore, belief: &[f64], noise: &Noise) -> Result<usize> {
    let q = net.q_values(store, &row(belief), noise, 0)?;
    Ok(argmax(q.data()))
}

/// Greedy under head `head`, deterministic pass.
pub fn select_bootstrap(net: &Network, store: &ParamStore, belief: &[f64], head: usize) -> Result<usize> {
    let q = net.q_values(store, &row(belief), &Noise::none(), head)?;
    Ok(argmax(q.data()))
}

/// Deterministic pass with head Q-values averaged.
pub fn select_mean(net: &Network, store: &ParamStore, belief: &[f64]) -> Result<usize> {
    let qs = net.q_values_all_heads(store, &row(belief), &Noise::none())?;
    let k = qs.len() as f64;
    let mut avg = vec![0.0; net.num_actions()];
    for q in &qs {
        for (a, v) in avg.iter_mut().zip(q.data()) {
            *a += v / k;
        }
    }
    Ok(argmax(&avg))
}
