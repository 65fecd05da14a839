//! Training objectives: TD targets and squared TD loss, the variational free
//! energy and the black-box α-divergence energy.
//!
//! With TD residual `e = y - Q(b, a; w)` and likelihood variance `s2`, the
//! per-datapoint Gaussian log-likelihood (up to a constant) is
//! `l = -e^2 / (2 s2)`. The default `s2 = 0.5` makes `-l` the squared TD
//! error itself. For `K` weight samples `w_1..w_K`:
//!
//! ```text
//! free energy = kl_weight * KL[q || p] - mean_n (1/K) sum_i l(n, w_i)
//! BB-alpha    = kl_weight * KL[q || p] - (1/alpha) mean_n log (1/K) sum_i exp(alpha * l(n, w_i))
//! ```
//!
//! Both data terms average over the minibatch, like the plain TD loss, so
//! that `BB-alpha -> free energy` as `alpha -> 0` and a single sample makes
//! the two coincide exactly.

use rand::Rng;

use crate::bayes::GaussianPrior;
use crate::error::{Error, Result};
use crate::nn::{Network, Noise};
use crate::params::{Gradients, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// One step of experience.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub belief: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_belief: Vec<f64>,
    pub terminal: bool,
}

/// A minibatch of transitions, with optional per-head inclusion masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    pub head_masks: Option<Vec<Vec<bool>>>,
}

impl Batch {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        Self::with_masks(transitions, None)
    }

    pub fn with_masks(transitions: Vec<Transition>, head_masks: Option<Vec<Vec<bool>>>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(t) = transitions.iter().find(|t| !t.reward.is_finite()) {
            return Err(Error::NonFinite(format!("reward {} in batch", t.reward)));
        }
        if let Some(m) = &head_masks {
            if m.len() != transitions.len() {
                return Err(Error::shape("Batch head masks", &[transitions.len()], &[m.len()]));
            }
        }
        Ok(Self {
            transitions,
            head_masks,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn beliefs(&self) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.transitions.iter().map(|t| t.belief.as_slice()).collect();
        Tensor::from_rows(&rows)
    }

    pub fn next_beliefs(&self) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.transitions.iter().map(|t| t.next_belief.as_slice()).collect();
        Tensor::from_rows(&rows)
    }

    pub fn actions(&self) -> Vec<usize> {
        self.transitions.iter().map(|t| t.action).collect()
    }
}

/// Which BB-α data term to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BbAlphaForm {
    /// Likelihood raised to `alpha` inside the expectation.
    Standard,
    /// Expectation of the plain likelihood, divided by `alpha`.
    Unpowered,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConfig {
    pub gamma: f64,
    pub kl_weight: f64,
    pub mc_samples: usize,
    pub alpha: f64,
    pub lik_variance: f64,
    pub prior: GaussianPrior,
    pub bb_alpha_form: BbAlphaForm,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            kl_weight: 1.0,
            mc_samples: 1,
            alpha: 0.5,
            lik_variance: 0.5,
            prior: GaussianPrior::default(),
            bb_alpha_form: BbAlphaForm::Standard,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
        }
        if !(self.lik_variance > 0.0) {
            return Err(Error::InvalidArgument("likelihood variance must be positive".into()));
        }
        if !(self.kl_weight >= 0.0) {
            return Err(Error::InvalidArgument("KL weight must be non-negative".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument("alpha must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-minibatch KL weight when an epoch is split into `num_batches`
/// minibatches: the KL terms of one epoch then add up to exactly one KL.
pub fn kl_weight_for(num_batches: usize) -> f64 {
    1.0 / num_batches.max(1) as f64
}

/// `y = r` for terminal transitions, else `r + gamma * max_a' Q_target(b', a')`,
/// evaluated through head `head` at the posterior mean without noise.
pub fn td_targets(batch: &Batch, net: &Network, target: &ParamStore, gamma: f64, head: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let q = net.q_values(target, &batch.next_beliefs()?, &Noise::none(), head)?;
    q.ensure_finite("target Q-values")?;
    Ok(batch
        .transitions
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.reward
            } else {
                let best = q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward + gamma * best
            }
        })
        .collect())
}

/// `Q(b_n, a_n) - y_n` as a `[batch]` node.
fn residual_node(tape: &mut Tape, q: NodeId, actions: &[usize], y: &[f64]) -> Result<NodeId> {
    let picked = tape.gather(q, actions)?;
    let target = tape.constant(Tensor::vector(y.to_vec()));
    tape.sub(picked, target)
}

/// Mean over the batch of `(y_n - Q(b_n, a_n))^2`.
pub fn td_loss_node(tape: &mut Tape, q: NodeId, actions: &[usize], y: &[f64]) -> Result<NodeId> {
    let r = residual_node(tape, q, actions, y)?;
    let sq = tape.square(r)?;
    tape.mean(sq)
}

fn run(store: &ParamStore, build: impl FnOnce(&mut Tape) -> Result<NodeId>) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let loss = build(&mut tape)?;
    let value = tape.value(loss).item();
    let grads = tape.backward_scalar(store, loss)?;
    Ok((value, grads))
}

fn check_targets(batch: &Batch, y: &[f64]) -> Result<()> {
    if y.len() != batch.len() {
        return Err(Error::shape("targets", &[batch.len()], &[y.len()]));
    }
    Ok(())
}

/// Squared TD loss through head `head` under `noise`, with gradients.
/// Only the Q-value of the action actually taken enters each term.
pub fn td_loss(batch: &Batch, net: &Network, store: &ParamStore, y: &[f64], noise: &Noise, head: usize) -> Result<(f64, Gradients)> {
    check_targets(batch, y)?;
    let input = batch.beliefs()?;
    let actions = batch.actions();
    run(store, |tape| {
        let x = tape.constant(input);
        let q = net.build(tape, store, x, noise, head)?;
        td_loss_node(tape, q, &actions, y)
    })
}

/// Bootstrapped-ensemble loss: head `k` regresses on `targets[k]` using only
/// transitions whose mask includes `k`; squared errors are summed over heads
/// and divided by the number of included (transition, head) pairs.
pub fn masked_heads_td_loss(
    batch: &Batch,
    net: &Network,
    store: &ParamStore,
    targets: &[Vec<f64>],
    noise: &Noise,
) -> Result<(f64, Gradients)> {
    let heads = net.num_heads();
    if targets.len() != heads {
        return Err(Error::shape("per-head targets", &[heads], &[targets.len()]));
    }
    for y in targets {
        check_targets(batch, y)?;
    }
    let masks: Vec<Vec<f64>> = (0..heads)
        .map(|k| {
            batch
                .transitions
                .iter()
                .enumerate()
                .map(|(n, _)| match &batch.head_masks {
                    Some(m) if !m[n].get(k).copied().unwrap_or(false) => 0.0,
                    _ => 1.0,
                })
                .collect()
        })
        .collect();
    let included: f64 = masks.iter().flatten().sum();
    if included == 0.0 {
        return Ok((0.0, Gradients::new()));
    }
    let input = batch.beliefs()?;
    let actions = batch.actions();
    run(store, |tape| {
        let x = tape.constant(input);
        let outs = net.build_all_heads(tape, store, x, noise)?;
        let mut total: Option<NodeId> = None;
        for (k, q) in outs.into_iter().enumerate() {
            if masks[k].iter().all(|&m| m == 0.0) {
                continue;
            }
            let r = residual_node(tape, q, &actions, &targets[k])?;
            let sq = tape.square(r)?;
            let m = tape.constant(Tensor::vector(masks[k].clone()));
            let masked = tape.mul(sq, m)?;
            let s = tape.sum(masked)?;
            total = Some(match total {
                None => s,
                Some(t) => tape.add(t, s)?,
            });
        }
        let total = total.expect("at least one head has data");
        tape.scale(total, 1.0 / included)
    })
}

/// Squared TD loss plus the concrete-dropout regulariser.
pub fn concrete_td_loss(
    batch: &Batch,
    net: &Network,
    store: &ParamStore,
    y: &[f64],
    noise: &Noise,
    weight_reg: f64,
    dropout_reg: f64,
) -> Result<(f64, Gradients)> {
    check_targets(batch, y)?;
    let input = batch.beliefs()?;
    let actions = batch.actions();
    run(store, |tape| {
        let x = tape.constant(input);
        let q = net.build(tape, store, x, noise, 0)?;
        let loss = td_loss_node(tape, q, &actions, y)?;
        match net.concrete_regularizer_node(tape, store, weight_reg, dropout_reg)? {
            Some(reg) => tape.add(loss, reg),
            None => Ok(loss),
        }
    })
}

/// Per-datapoint log-likelihood `-(y - Q)^2 / (2 s2)` for one weight sample.
fn log_lik_node(tape: &mut Tape, q: NodeId, actions: &[usize], y: &[f64], lik_variance: f64) -> Result<NodeId> {
    let r = residual_node(tape, q, actions, y)?;
    let sq = tape.square(r)?;
    tape.scale(sq, -1.0 / (2.0 * lik_variance))
}

fn sample_noises<R: Rng + ?Sized>(net: &Network, batch: usize, k: usize, rng: &mut R) -> Result<Vec<Noise>> {
    (0..k).map(|_| net.sample_noise(batch, rng)).collect()
}

fn with_kl(tape: &mut Tape, net: &Network, store: &ParamStore, cfg: &ObjectiveConfig, data: NodeId) -> Result<NodeId> {
    if cfg.kl_weight == 0.0 {
        return Ok(data);
    }
    match net.kl_node(tape, store, &cfg.prior)? {
        Some(kl) => {
            let kl = tape.scale(kl, cfg.kl_weight)?;
            tape.add(kl, data)
        }
        None => Ok(data),
    }
}

/// Monte Carlo free energy with `cfg.mc_samples` fresh weight samples.
pub fn free_energy<R: Rng + ?Sized>(
    batch: &Batch,
    net: &Network,
    store: &ParamStore,
    y: &[f64],
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    cfg.validate()?;
    let noises = sample_noises(net, batch.len(), cfg.mc_samples, rng)?;
    free_energy_with_noise(batch, net, store, y, cfg, &noises)
}

/// Free energy for caller-supplied samples (one [`Noise`] per sample).
pub fn free_energy_with_noise(
    batch: &Batch,
    net: &Network,
    store: &ParamStore,
    y: &[f64],
    cfg: &ObjectiveConfig,
    noises: &[Noise],
) -> Result<(f64, Gradients)> {
    cfg.validate()?;
    check_targets(batch, y)?;
    if noises.is_empty() {
        return Err(Error::InvalidArgument("need at least one weight sample".into()));
    }
    let input = batch.beliefs()?;
    let actions = batch.actions();
    let k = noises.len() as f64;
    run(store, |tape| {
        let x = tape.constant(input);
        let mut acc: Option<NodeId> = None;
        for noise in noises {
            let q = net.build(tape, store, x, noise, 0)?;
            let ll = log_lik_node(tape, q, &actions, y, cfg.lik_variance)?;
            let m = tape.mean(ll)?;
            acc = Some(match acc {
                None => m,
                Some(a) => tape.add(a, m)?,
            });
        }
        let data = tape.scale(acc.expect("non-empty"), -1.0 / k)?;
        with_kl(tape, net, store, cfg, data)
    })
}

/// Monte Carlo BB-α energy with `cfg.mc_samples` fresh weight samples.
pub fn bb_alpha_energy<R: Rng + ?Sized>(
    batch: &Batch,
    net: &Network,
    store: &ParamStore,
    y: &[f64],
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    if cfg.alpha == 0.0 {
        return Err(Error::InvalidArgument(
            "alpha = 0 is the variational free energy; use free_energy".into(),
        ));
    }
    cfg.validate()?;
    let noises = sample_noises(net, batch.len(), cfg.mc_samples, rng)?;
    bb_alpha_energy_with_noise(batch, net, store, y, cfg, &noises)
}

/// BB-α energy for caller-supplied samples; the log-mean-exp over samples is
/// computed with max-shift stabilisation.
pub fn bb_alpha_energy_with_noise(
    batch: &Batch,
    net: &Network,
    store: &ParamStore,
    y: &[f64],
    cfg: &ObjectiveConfig,
    noises: &[Noise],
) -> Result<(f64, Gradients)> {
    if cfg.alpha == 0.0 {
        return Err(Error::InvalidArgument(
            "alpha = 0 is the variational free energy; use free_energy".into(),
        ));
    }
    cfg.validate()?;
    check_targets(batch, y)?;
    if noises.is_empty() {
        return Err(Error::InvalidArgument("need at least one weight sample".into()));
    }
    let input = batch.beliefs()?;
    let actions = batch.actions();
    let alpha = cfg.alpha;
    let inner_power = match cfg.bb_alpha_form {
        BbAlphaForm::Standard => alpha,
        BbAlphaForm::Unpowered => 1.0,
    };
    let log_k = (noises.len() as f64).ln();
    run(store, |tape| {
        let x = tape.constant(input);
        let mut terms = Vec::with_capacity(noises.len());
        for noise in noises {
            let q = net.build(tape, store, x, noise, 0)?;
            let ll = log_lik_node(tape, q, &actions, y, cfg.lik_variance)?;
            terms.push(tape.scale(ll, inner_power)?);
        }
        let lse = tape.log_sum_exp(&terms)?;
        let log_mean = tape.add_const(lse, -log_k)?;
        let m = tape.mean(log_mean)?;
        let data = tape.scale(m, -1.0 / alpha)?;
        with_kl(tape, net, store, cfg, data)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, Dense, HiddenNoise, Linear};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(belief: Vec<f64>, action: usize, reward: f64, next: Vec<f64>, terminal: bool) -> Transition {
        Transition {
            belief,
            action,
            reward,
            next_belief: next,
            terminal,
        }
    }

    /// Linear network whose Q-values equal the input vector.
    fn identity_net(n: usize) -> (Network, ParamStore) {
        let mut store = ParamStore::new();
        let mut w = Tensor::zeros(&[n, n]);
        for i in 0..n {
            w.data_mut()[i * n + i] = 1.0;
        }
        let layer = Dense::Plain(Linear {
            weight: store.add("w", w),
            bias: store.add("b", Tensor::zeros(&[n])),
            fan_in: n,
            fan_out: n,
        });
        (Network::from_layers(n, vec![], vec![layer], HiddenNoise::None).unwrap(), store)
    }

    #[test]
    fn terminal_target_is_reward() {
        let (net, store) = identity_net(3);
        let b = Batch::new(vec![tr(vec![0.0; 3], 0, 20.0, vec![100.0, 7.0, -3.0], true)]).unwrap();
        assert_eq!(td_targets(&b, &net, &store, 0.99, 0).unwrap(), vec![20.0]);
    }

    #[test]
    fn non_terminal_target_bootstraps_max() {
        let (net, store) = identity_net(3);
        let b = Batch::new(vec![tr(vec![0.0; 3], 0, -1.0, vec![3.0, 5.0, 1.0], false)]).unwrap();
        let y = td_targets(&b, &net, &store, 0.99, 0).unwrap();
        assert!((y[0] - 3.95).abs() < 1e-12);
    }

    #[test]
    fn td_loss_single_transition() {
        let (net, store) = identity_net(3);
        // prediction Q(b, a=1) = 2.95, target 3.95
        let b = Batch::new(vec![tr(vec![0.0, 2.95, 0.0], 1, 0.0, vec![0.0; 3], true)]).unwrap();
        let (l, _) = td_loss(&b, &net, &store, &[3.95], &Noise::none(), 0).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn td_loss_zero_at_fixed_point() {
        let (net, store) = identity_net(3);
        let b = Batch::new(vec![
            tr(vec![1.0, 2.0, 3.0], 2, 0.0, vec![0.0; 3], true),
            tr(vec![4.0, 5.0, 6.0], 0, 0.0, vec![0.0; 3], true),
        ])
        .unwrap();
        let (l, g) = td_loss(&b, &net, &store, &[3.0, 4.0], &Noise::none(), 0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|(_, t)| t.max_abs() == 0.0));
    }

    #[test]
    fn bb_alpha_rejects_zero_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mut arch = Architecture::mlp(2, &[3], 2);
        arch.variational = true;
        let net = Network::new(&arch, &mut store, &mut rng).unwrap();
        let b = Batch::new(vec![tr(vec![0.1, 0.2], 0, 1.0, vec![0.0, 0.0], true)]).unwrap();
        let cfg = ObjectiveConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            bb_alpha_energy(&b, &net, &store, &[1.0], &cfg, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(Batch::new(vec![]).is_err());
    }
}
