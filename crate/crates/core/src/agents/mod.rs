//! The benchmarked policies, their replay memory and the episode loop.
//!
//! | tag                | network                 | exploration                    |
//! |--------------------|-------------------------|--------------------------------|
//! | `dqn`              | deterministic           | linear ε-greedy                |
//! | `bbqn`             | variational             | Thompson, free energy          |
//! | `alpha-bbqn`       | variational             | Thompson, BB-α energy          |
//! | `dropout`          | fixed-rate dropout      | Thompson (one dropout mask)    |
//! | `concrete-dropout` | learned-rate dropout    | Thompson (one relaxed mask)    |
//! | `bootstrapped`     | shared trunk, `K` heads | one random head per episode    |
//! | `gpsarsa`          | GP over Q               | Thompson over the GP posterior |

mod gp;
mod neural;
pub mod replay;
pub mod select;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::objectives::{BbAlphaForm, Transition};

pub use gp::GpAgent;
pub use neural::NeuralAgent;
pub use replay::ReplayBuffer;
pub use select::{argmax, linear_epsilon, select_bootstrap, select_egreedy, select_mean, select_thompson};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dqn,
    Bbqn,
    AlphaBbqn,
    Dropout,
    ConcreteDropout,
    Bootstrapped,
    Gpsarsa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Dqn,
        Algorithm::Bbqn,
        Algorithm::AlphaBbqn,
        Algorithm::Dropout,
        Algorithm::ConcreteDropout,
        Algorithm::Bootstrapped,
        Algorithm::Gpsarsa,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Bbqn => "bbqn",
            Algorithm::AlphaBbqn => "alpha-bbqn",
            Algorithm::Dropout => "dropout",
            Algorithm::ConcreteDropout => "concrete-dropout",
            Algorithm::Bootstrapped => "bootstrapped",
            Algorithm::Gpsarsa => "gpsarsa",
        }
    }

    pub fn is_variational(&self) -> bool {
        matches!(self, Algorithm::Bbqn | Algorithm::AlphaBbqn)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent `{s}`")))
    }
}

/// When Thompson-sampling agents redraw their weights or masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThompsonSchedule {
    /// A fresh draw for every action.
    PerAction,
    /// One draw held for a whole dialogue.
    PerEpisode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub sigma_obs: f64,
    pub prior_scale: f64,
    /// Admission threshold as a fraction of the mean self-similarity of
    /// reference beliefs; used when `nu` is unset.
    pub nu_fraction: f64,
    pub nu: Option<f64>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            sigma_obs: 1.0,
            prior_scale: 1.0,
            nu_fraction: 0.1,
            nu: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Gradient steps happen every `train_every` turns.
    pub train_every: usize,
    /// Copy the online weights to the target network every this many
    /// updates; `None` bootstraps from the online network.
    pub target_update: Option<u64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Dialogues over which ε decays linearly.
    pub epsilon_horizon: usize,
    pub thompson: ThompsonSchedule,
    pub mc_samples: usize,
    pub alpha: f64,
    pub bb_alpha_form: BbAlphaForm,
    /// KL weight per minibatch is `kl_scale / replay size`.
    pub kl_scale: f64,
    pub lik_variance: f64,
    pub prior_std: f64,
    pub init_rho: f64,
    pub dropout_rate: f64,
    pub concrete_temperature: f64,
    /// Concrete-dropout regularisers, divided by the replay size.
    pub concrete_weight_reg: f64,
    pub concrete_dropout_reg: f64,
    pub heads: usize,
    pub mask_prob: f64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    pub gp: GpConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            hidden: vec![130, 50],
            gamma: 0.99,
            learning_rate: 1e-3,
            batch_size: 64,
            replay_capacity: 10_000,
            train_every: 1,
            target_update: Some(100),
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            epsilon_horizon: 4000,
            thompson: ThompsonSchedule::PerAction,
            mc_samples: 1,
            alpha: 0.5,
            bb_alpha_form: BbAlphaForm::Standard,
            kl_scale: 1.0,
            lik_variance: 0.5,
            prior_std: 1.0,
            init_rho: -3.0,
            dropout_rate: 0.1,
            concrete_temperature: 0.1,
            concrete_weight_reg: 1e-4,
            concrete_dropout_reg: 2.0,
            heads: 1,
            mask_prob: 1.0,
            grad_clip: None,
            gp: GpConfig::default(),
        }
    }
}

impl AgentConfig {
    /// Default settings for `algorithm`.
    pub fn preset(algorithm: Algorithm) -> Self {
        let mut c = Self {
            algorithm,
            ..Self::default()
        };
        match algorithm {
            Algorithm::Dqn => c.epsilon_start = 0.3,
            Algorithm::AlphaBbqn => c.mc_samples = 2,
            Algorithm::Bootstrapped => c.heads = 5,
            _ => {}
        }
        c
    }

    /// The preset for the `algorithm` named in `overrides` (or `fallback`),
    /// with every field present in `overrides` replacing the preset value.
    pub fn from_overrides(fallback: Algorithm, overrides: &serde_json::Value) -> Result<Self> {
        let algorithm = match overrides.get("algorithm") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("algorithm: {e}")))?,
            None => fallback,
        };
        let mut base = serde_json::to_value(Self::preset(algorithm))?;
        merge_json(&mut base, overrides);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Config(format!("agent config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("{name} must lie in [0, 1], got {e}"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity".into());
        }
        if self.train_every == 0 || self.mc_samples == 0 || self.heads == 0 {
            return bad("train_every, mc_samples and heads must be positive".into());
        }
        if self.target_update == Some(0) {
            return bad("target_update must be positive when set".into());
        }
        if self.algorithm == Algorithm::AlphaBbqn && !(self.alpha > 0.0) {
            return bad("alpha-bbqn needs alpha > 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return bad("mask_prob must lie in [0, 1]".into());
        }
        if !(self.lik_variance > 0.0 && self.prior_std > 0.0 && self.gp.sigma_obs > 0.0 && self.gp.prior_scale > 0.0) {
            return bad("variances and scales must be positive".into());
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base` (objects merge, anything else replaces).
pub fn merge_json(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// A learning policy.
///
/// `explore` and `observe` are the training path; `greedy` is the
/// evaluation rule and never changes any state.
pub trait Agent: Send {
    fn config(&self) -> &AgentConfig;

    fn algorithm(&self) -> Algorithm {
        self.config().algorithm
    }

    /// Draws per-episode exploration state.
    fn begin_episode(&mut self, rng: &mut dyn RngCore) -> Result<()>;

    fn explore(&mut self, belief: &[f64], rng: &mut dyn RngCore) -> Result<usize>;

    fn greedy(&self, belief: &[f64]) -> Result<usize>;

    /// Learns from one transition; `next_action` is the action already
    /// chosen in `t.next_belief` (absent when terminal). Returns the training
    /// loss when a gradient step was taken.
    fn observe(&mut self, t: &Transition, next_action: Option<usize>, rng: &mut dyn RngCore) -> Result<Option<f64>>;

    fn end_episode(&mut self);

    /// Completed training dialogues.
    fn episodes(&self) -> usize;

    fn checkpoint(&self) -> Result<Checkpoint>;

    fn restore(&mut self, ck: &Checkpoint) -> Result<()>;

    /// Hash of all mutable state: parameters, optimiser, replay, counters.
    fn state_checksum(&self) -> u64;
}

/// Builds a fresh agent. GP agents need `cfg.gp.nu` to be set.
pub fn build_agent(cfg: &AgentConfig, belief_dim: usize, num_actions: usize, rng: &mut dyn RngCore) -> Result<Box<dyn Agent>> {
    cfg.validate()?;
    Ok(match cfg.algorithm {
        Algorithm::Gpsarsa => Box::new(GpAgent::new(cfg.clone(), belief_dim, num_actions)?),
        _ => Box::new(NeuralAgent::new(cfg.clone(), belief_dim, num_actions, rng)?),
    })
}

/// Rebuilds an agent from a checkpoint written by [`Agent::checkpoint`].
pub fn agent_from_checkpoint(ck: &Checkpoint) -> Result<Box<dyn Agent>> {
    let meta = &ck.metadata;
    let cfg: AgentConfig = serde_json::from_value(meta.get("agent").cloned().unwrap_or_default())
        .map_err(|e| Error::Checkpoint(format!("agent config: {e}")))?;
    let dim = |k: &str| {
        meta.get(k)
            .and_then(serde_json::Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("missing `{k}`")))
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut agent = build_agent(&cfg, dim("belief_dim")?, dim("num_actions")?, &mut rng)?;
    agent.restore(ck)?;
    Ok(agent)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub turns: usize,
    pub reward: f64,
    pub success: bool,
    /// Mean training loss over the gradient steps taken, if any.
    pub mean_loss: Option<f64>,
}

/// Plays one dialogue. Train mode explores and learns after every turn;
/// eval mode acts greedily and touches no agent state.
pub fn run_episode(agent: &mut dyn Agent, env: &mut dyn Environment, mode: Mode, rng: &mut dyn RngCore) -> Result<EpisodeLog> {
    let train = mode == Mode::Train;
    let mut belief = env.reset()?;
    if train {
        agent.begin_episode(rng)?;
    }
    let pick = |agent: &mut dyn Agent, b: &[f64], rng: &mut dyn RngCore| {
        if train {
            agent.explore(b, rng)
        } else {
            agent.greedy(b)
        }
    };
    let mut action = pick(agent, &belief, rng)?;
    let mut log = EpisodeLog {
        turns: 0,
        reward: 0.0,
        success: false,
        mean_loss: None,
    };
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    loop {
        let out = env.step(action)?;
        log.turns += 1;
        log.reward += out.reward;
        let next = if out.done { None } else { Some(pick(agent, &out.belief, rng)?) };
        if train {
            let t = Transition {
                belief,
                action,
                reward: out.reward,
                next_belief: out.belief.clone(),
                terminal: out.done,
            };
            if let Some(l) = agent.observe(&t, next, rng)? {
                loss_sum += l;
                loss_n += 1;
            }
        }
        if out.done {
            log.success = out.info.success;
            break;
        }
        belief = out.belief;
        action = next.expect("chosen above");
    }
    if train {
        agent.end_episode();
    }
    log.mean_loss = (loss_n > 0).then(|| loss_sum / loss_n as f64);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{DialogueEnv, EnvConfig, NBestList, StepInfo, StepOutcome, SummaryAction, SystemAct};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tags_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_value(a).unwrap(), serde_json::json!(a.tag()));
        }
        assert!("dqn2".parse::<Algorithm>().is_err());
    }

    #[test]
    fn overrides_merge_over_presets() {
        let cfg = AgentConfig::from_overrides(Algorithm::Dqn, &serde_json::json!({"algorithm": "bootstrapped", "heads": 3, "gp": {"sigma_obs": 2.0}})).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Bootstrapped);
        assert_eq!(cfg.heads, 3);
        assert_eq!(cfg.gp.sigma_obs, 2.0);
        assert_eq!(cfg.gp.prior_scale, 1.0);
        assert_eq!(cfg.hidden, vec![130, 50]);
        assert!(AgentConfig::from_overrides(Algorithm::Dqn, &serde_json::json!({"gamma": 1.0})).is_err());
        assert!(AgentConfig::from_overrides(Algorithm::Dqn, &serde_json::json!({"hiden": [3]})).is_err());
    }

    /// Ends successfully on bye, otherwise runs until the cap.
    struct ByeEnv {
        turn: usize,
    }

    impl Environment for ByeEnv {
        fn reset(&mut self) -> Result<Vec<f64>> {
            self.turn = 0;
            Ok(vec![1.0, 0.0])
        }

        fn step(&mut self, action: usize) -> Result<StepOutcome> {
            self.turn += 1;
            let bye = action == 1;
            Ok(StepOutcome {
                belief: vec![1.0, self.turn as f64 / 25.0],
                reward: if bye { 19.0 } else { -1.0 },
                done: bye || self.turn >= 25,
                info: StepInfo {
                    turn: self.turn,
                    system_act: if bye { SystemAct::Bye } else { SystemAct::Repeat },
                    user_act: None,
                    nbest: NBestList::default(),
                    success: bye,
                },
            })
        }
    }

    fn biased_dqn(favour: usize) -> Box<dyn Agent> {
        let mut cfg = AgentConfig::preset(Algorithm::Dqn);
        cfg.hidden = vec![4];
        cfg.epsilon_start = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = build_agent(&cfg, 2, 2, &mut rng).unwrap();
        // zero weights and a bias on the favoured action
        let mut ck = agent.checkpoint().unwrap();
        for t in ck.tensors.iter_mut() {
            t.values.iter_mut().for_each(|v| *v = 0.0);
            if t.name.ends_with("out.bias") {
                t.values[favour] = 1.0;
            }
        }
        agent.restore(&ck).unwrap();
        agent
    }

    #[test]
    fn episode_ends_on_bye_or_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = ByeEnv { turn: 0 };
        let log = run_episode(biased_dqn(1).as_mut(), &mut env, Mode::Eval, &mut rng).unwrap();
        assert_eq!((log.turns, log.success), (1, true));
        let log = run_episode(biased_dqn(0).as_mut(), &mut env, Mode::Eval, &mut rng).unwrap();
        assert_eq!((log.turns, log.success), (25, false));
    }

    #[test]
    fn episodes_are_reproducible() {
        let play = || {
            let cfg = AgentConfig::preset(Algorithm::Bbqn);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut env = DialogueEnv::builtin(EnvConfig::with_error_rate(0.15), 8).unwrap();
            let mut agent = build_agent(&cfg, env.belief_dim(), env.num_actions(), &mut rng).unwrap();
            (0..3).map(|_| run_episode(agent.as_mut(), &mut env, Mode::Train, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(play(), play());
    }

    #[test]
    fn bye_index_matches_env() {
        assert_eq!(SummaryAction::Bye.index(3), 13);
    }
}
