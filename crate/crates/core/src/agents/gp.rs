//! GP-SARSA agent.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, RngCore};

use super::select::linear_epsilon;
use super::{Agent, AgentConfig, Algorithm};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::gpsarsa::{gp_greedy_action, gp_select_action, gp_update, load_gp, save_gp, GpPosterior, KernelSpec, SparseDictionary};
use crate::objectives::Transition;

pub struct GpAgent {
    cfg: AgentConfig,
    dict: SparseDictionary,
    post: GpPosterior,
    episodes: usize,
    updates: u64,
}

impl GpAgent {
    pub fn new(cfg: AgentConfig, belief_dim: usize, num_actions: usize) -> Result<Self> {
        if cfg.algorithm != Algorithm::Gpsarsa {
            return Err(Error::Config(format!("{} is not a GP agent", cfg.algorithm)));
        }
        let nu = cfg
            .gp
            .nu
            .ok_or_else(|| Error::Config("gp.nu must be set (the harness derives it from reference beliefs)".into()))?;
        let kernel = KernelSpec {
            prior_scale: cfg.gp.prior_scale,
        };
        Ok(Self {
            dict: SparseDictionary::new(belief_dim, num_actions, nu, kernel)?,
            post: GpPosterior::new(cfg.gp.sigma_obs, cfg.gamma)?,
            cfg,
            episodes: 0,
            updates: 0,
        })
    }

    pub fn dictionary(&self) -> &SparseDictionary {
        &self.dict
    }

    pub fn posterior(&self) -> &GpPosterior {
        &self.post
    }
}

impl Agent for GpAgent {
    fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn begin_episode(&mut self, _rng: &mut dyn RngCore) -> Result<()> {
        Ok(())
    }

    fn explore(&mut self, belief: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        let eps = linear_epsilon(self.cfg.epsilon_start, self.cfg.epsilon_end, self.episodes, self.cfg.epsilon_horizon);
        if eps > 0.0 && rng.random_bool(eps) {
            return Ok(rng.random_range(0..self.dict.num_actions()));
        }
        gp_select_action(&self.post, &self.dict, belief, rng)
    }

    fn greedy(&self, belief: &[f64]) -> Result<usize> {
        gp_greedy_action(&self.post, &self.dict, belief)
    }

    fn observe(&mut self, t: &Transition, next_action: Option<usize>, _rng: &mut dyn RngCore) -> Result<Option<f64>> {
        let next = match (t.terminal, next_action) {
            (true, _) => None,
            (false, Some(a)) => Some((t.next_belief.as_slice(), a)),
            (false, None) => return Err(Error::Protocol("GP-SARSA needs the next action of a non-terminal step".into())),
        };
        if gp_update(&mut self.post, &mut self.dict, &t.belief, t.action, t.reward, next)? {
            self.updates += 1;
        }
        Ok(None)
    }

    fn end_episode(&mut self) {
        self.episodes += 1;
    }

    fn episodes(&self) -> usize {
        self.episodes
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "agent": self.cfg,
            "belief_dim": self.dict.dim(),
            "num_actions": self.dict.num_actions(),
            "episodes": self.episodes,
            "updates": self.updates,
        });
        let mut ck = Checkpoint::new(Algorithm::Gpsarsa.tag(), meta);
        save_gp(&mut ck, "gp.", &self.dict, &self.post);
        Ok(ck)
    }

    fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.kind != Algorithm::Gpsarsa.tag() {
            return Err(Error::Checkpoint(format!("checkpoint of `{}` loaded into gpsarsa", ck.kind)));
        }
        load_gp(ck, "gp.", &mut self.dict, &mut self.post)?;
        let count = |k: &str| ck.metadata.get(k).and_then(serde_json::Value::as_u64).unwrap_or(0);
        self.episodes = count("episodes") as usize;
        self.updates = count("updates");
        Ok(())
    }

    fn state_checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.dict.len().hash(&mut h);
        for i in 0..self.dict.len() {
            let (b, a) = self.dict.point(i);
            b.iter().for_each(|x| x.to_bits().hash(&mut h));
            a.hash(&mut h);
        }
        self.post.alpha().iter().chain(self.post.cov()).for_each(|x| x.to_bits().hash(&mut h));
        (self.episodes, self.updates).hash(&mut h);
        h.finish()
    }
}
