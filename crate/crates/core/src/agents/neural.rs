//! Q-network agents: ε-greedy DQN and the uncertainty-driven variants.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, RngCore};

use super::replay::ReplayBuffer;
use super::select::{argmax, linear_epsilon, select_bootstrap, select_mean, select_with_noise};
use super::{Agent, AgentConfig, Algorithm, ThompsonSchedule};
use crate::bayes::GaussianPrior;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{Architecture, HiddenNoiseSpec, Network, Noise};
use crate::objectives::{self, Batch, ObjectiveConfig, Transition};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

pub struct NeuralAgent {
    cfg: AgentConfig,
    belief_dim: usize,
    net: Network,
    store: ParamStore,
    /// Frozen copy used for bootstrap targets, when configured.
    target: Option<ParamStore>,
    adam: AdamState,
    replay: ReplayBuffer,
    turns: u64,
    updates: u64,
    episodes: usize,
    /// Per-episode exploration state.
    head: usize,
    episode_noise: Option<Noise>,
}

impl NeuralAgent {
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, belief_dim: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        if cfg.algorithm == Algorithm::Gpsarsa {
            return Err(Error::Config("gpsarsa is not a network agent".into()));
        }
        cfg.validate()?;
        let mut arch = Architecture::mlp(belief_dim, &cfg.hidden, num_actions);
        arch.init_rho = cfg.init_rho;
        arch.variational = cfg.algorithm.is_variational();
        arch.hidden_noise = match cfg.algorithm {
            Algorithm::Dropout => HiddenNoiseSpec::Dropout { rate: cfg.dropout_rate },
            Algorithm::ConcreteDropout => HiddenNoiseSpec::Concrete {
                init_rate: cfg.dropout_rate,
                temperature: cfg.concrete_temperature,
            },
            _ => HiddenNoiseSpec::None,
        };
        if cfg.algorithm == Algorithm::Bootstrapped {
            arch.heads = cfg.heads;
        }
        let mut store = ParamStore::new();
        let net = Network::new(&arch, &mut store, rng)?;
        let target = cfg.target_update.map(|_| store.clone());
        let adam = AdamState::new(&store, AdamConfig::default());
        let replay = ReplayBuffer::with_heads(cfg.replay_capacity, net.num_heads(), cfg.mask_prob)?;
        Ok(Self {
            cfg,
            belief_dim,
            net,
            store,
            target,
            adam,
            replay,
            turns: 0,
            updates: 0,
            episodes: 0,
            head: 0,
            episode_noise: None,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Head used for exploration in the current episode.
    pub fn episode_head(&self) -> usize {
        self.head
    }

    fn epsilon(&self) -> f64 {
        linear_epsilon(self.cfg.epsilon_start, self.cfg.epsilon_end, self.episodes, self.cfg.epsilon_horizon)
    }

    fn objective(&self) -> Result<ObjectiveConfig> {
        Ok(ObjectiveConfig {
            gamma: self.cfg.gamma,
            kl_weight: self.cfg.kl_scale / self.replay.len().max(1) as f64,
            mc_samples: self.cfg.mc_samples,
            alpha: self.cfg.alpha,
            lik_variance: self.cfg.lik_variance,
            prior: GaussianPrior::new(0.0, self.cfg.prior_std)?,
            bb_alpha_form: self.cfg.bb_alpha_form,
        })
    }

    /// Loss and gradients for one minibatch under the agent's objective.
    pub fn loss_and_gradients<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<(f64, Gradients)> {
        let target = self.target.as_ref().unwrap_or(&self.store);
        let gamma = self.cfg.gamma;
        let net = &self.net;
        match self.cfg.algorithm {
            Algorithm::Dqn => {
                let y = objectives::td_targets(batch, net, target, gamma, 0)?;
                objectives::td_loss(batch, net, &self.store, &y, &Noise::none(), 0)
            }
            Algorithm::Dropout => {
                let y = objectives::td_targets(batch, net, target, gamma, 0)?;
                let noise = net.sample_noise(batch.len(), rng)?;
                objectives::td_loss(batch, net, &self.store, &y, &noise, 0)
            }
            Algorithm::ConcreteDropout => {
                let y = objectives::td_targets(batch, net, target, gamma, 0)?;
                let noise = net.sample_noise(batch.len(), rng)?;
                let n = self.replay.len().max(1) as f64;
                objectives::concrete_td_loss(
                    batch,
                    net,
                    &self.store,
                    &y,
                    &noise,
                    self.cfg.concrete_weight_reg / n,
                    self.cfg.concrete_dropout_reg / n,
                )
            }
            Algorithm::Bbqn => {
                let y = objectives::td_targets(batch, net, target, gamma, 0)?;
                objectives::free_energy(batch, net, &self.store, &y, &self.objective()?, rng)
            }
            Algorithm::AlphaBbqn => {
                let y = objectives::td_targets(batch, net, target, gamma, 0)?;
                objectives::bb_alpha_energy(batch, net, &self.store, &y, &self.objective()?, rng)
            }
            Algorithm::Bootstrapped => {
                let ys = (0..net.num_heads())
                    .map(|k| objectives::td_targets(batch, net, target, gamma, k))
                    .collect::<Result<Vec<_>>>()?;
                objectives::masked_heads_td_loss(batch, net, &self.store, &ys, &Noise::none())
            }
            Algorithm::Gpsarsa => unreachable!("rejected in new"),
        }
    }

    /// One optimiser update on a fresh minibatch. On any numeric failure the
    /// parameters are left untouched.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let batch = self.replay.sample(self.cfg.batch_size, rng)?;
        let (loss, mut grads) = self.loss_and_gradients(&batch, rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss {loss}")));
        }
        if let Some(clip) = self.cfg.grad_clip {
            let norm = grads.flatten().iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        adam_step(&mut self.store, &grads, &mut self.adam, self.cfg.learning_rate)?;
        self.updates += 1;
        if let (Some(every), Some(t)) = (self.cfg.target_update, self.target.as_mut()) {
            if self.updates % every == 0 {
                t.copy_from(&self.store)?;
            }
        }
        Ok(loss)
    }

    fn thompson_action(&mut self, belief: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        match (&self.episode_noise, self.cfg.thompson) {
            (Some(noise), ThompsonSchedule::PerEpisode) => select_with_noise(&self.net, &self.store, belief, noise),
            _ => super::select_thompson(&self.net, &self.store, belief, rng),
        }
    }
}

impl Agent for NeuralAgent {
    fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn begin_episode(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        self.head = if self.net.num_heads() > 1 {
            rng.random_range(0..self.net.num_heads())
        } else {
            0
        };
        self.episode_noise = match self.cfg.thompson {
            ThompsonSchedule::PerEpisode if self.net.is_stochastic() => Some(self.net.sample_noise(1, rng)?),
            _ => None,
        };
        Ok(())
    }

    fn explore(&mut self, belief: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        let eps = self.epsilon();
        if eps > 0.0 && rng.random_bool(eps) {
            return Ok(rng.random_range(0..self.net.num_actions()));
        }
        match self.cfg.algorithm {
            Algorithm::Bbqn | Algorithm::AlphaBbqn | Algorithm::Dropout | Algorithm::ConcreteDropout => self.thompson_action(belief, rng),
            Algorithm::Bootstrapped => select_bootstrap(&self.net, &self.store, belief, self.head),
            _ => self.greedy(belief),
        }
    }

    fn greedy(&self, belief: &[f64]) -> Result<usize> {
        if self.net.num_heads() > 1 {
            select_mean(&self.net, &self.store, belief)
        } else {
            let q = self.net.q_values(&self.store, &Tensor::vector(belief.to_vec()), &Noise::none(), 0)?;
            Ok(argmax(q.data()))
        }
    }

    fn observe(&mut self, t: &Transition, _next_action: Option<usize>, rng: &mut dyn RngCore) -> Result<Option<f64>> {
        if t.belief.len() != self.belief_dim || t.next_belief.len() != self.belief_dim {
            return Err(Error::shape("transition belief", &[self.belief_dim], &[t.belief.len()]));
        }
        self.replay.push(t.clone(), rng);
        self.turns += 1;
        if self.replay.len() < self.cfg.batch_size || self.turns % self.cfg.train_every as u64 != 0 {
            return Ok(None);
        }
        match self.train_step(rng) {
            Ok(loss) => Ok(Some(loss)),
            Err(Error::NonFinite(msg)) => {
                log::warn!("training step skipped: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn end_episode(&mut self) {
        self.episodes += 1;
        self.episode_noise = None;
    }

    fn episodes(&self) -> usize {
        self.episodes
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "agent": self.cfg,
            "belief_dim": self.belief_dim,
            "num_actions": self.net.num_actions(),
            "episodes": self.episodes,
            "updates": self.updates,
        });
        let mut ck = Checkpoint::new(self.cfg.algorithm.tag(), meta);
        ck.push_store("online.", &self.store);
        if let Some(t) = &self.target {
            ck.push_store("target.", t);
        }
        Ok(ck)
    }

    fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.kind != self.cfg.algorithm.tag() {
            return Err(Error::Checkpoint(format!("checkpoint of `{}` loaded into `{}`", ck.kind, self.cfg.algorithm)));
        }
        ck.load_store("online.", &mut self.store)?;
        if let Some(t) = self.target.as_mut() {
            ck.load_store("target.", t)?;
        }
        let count = |k: &str| ck.metadata.get(k).and_then(serde_json::Value::as_u64).unwrap_or(0);
        self.episodes = count("episodes") as usize;
        self.updates = count("updates");
        Ok(())
    }

    fn state_checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.store.checksum().hash(&mut h);
        self.target.as_ref().map(ParamStore::checksum).hash(&mut h);
        self.adam.step.hash(&mut h);
        for t in self.adam.m.iter().chain(&self.adam.v) {
            t.data().iter().for_each(|x| x.to_bits().hash(&mut h));
        }
        self.replay.len().hash(&mut h);
        for (t, m) in self.replay.iter() {
            t.reward.to_bits().hash(&mut h);
            t.action.hash(&mut h);
            m.hash(&mut h);
        }
        (self.turns, self.updates, self.episodes, self.head).hash(&mut h);
        h.finish()
    }
}
