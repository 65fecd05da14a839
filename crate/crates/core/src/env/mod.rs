//! Goal-driven slot-filling dialogue simulator.
//!
//! Each turn the policy picks a [`SummaryAction`]; the environment expands it
//! into a full [`SystemAct`] using the current belief, the simulated user
//! answers, the answer passes through the error [`channel`], and the tracker
//! folds the resulting N-best list into the next belief vector.
//!
//! Rewards: `-turn_penalty` every turn, plus `success_reward` when the system
//! says bye after offering an entity that satisfies every goal constraint and
//! answering every goal request for that entity. Episodes end on system bye
//! or after `max_turns` turns.

pub mod acts;
pub mod belief;
pub mod channel;
pub mod ontology;
pub mod user;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use acts::{ActType, NBestList, SlotValue, SummaryAction, SystemAct, UserAct};
pub use belief::{belief_update, BeliefLayout, TrackerConfig};
pub use channel::{confuse, ChannelConfig};
pub use ontology::{sample_goal, Entity, GoalConfig, InformableSlot, Ontology, UserGoal};
pub use user::{user_respond, DialogueMemory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub channel: ChannelConfig,
    pub tracker: TrackerConfig,
    pub goal: GoalConfig,
    pub turn_penalty: f64,
    pub success_reward: f64,
    /// Request probability above which an offer also informs that slot.
    pub request_threshold: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            tracker: TrackerConfig::default(),
            goal: GoalConfig::default(),
            turn_penalty: 1.0,
            success_reward: 20.0,
            request_threshold: 0.5,
        }
    }
}

impl EnvConfig {
    pub fn with_error_rate(error_rate: f64) -> Self {
        let mut cfg = Self::default();
        cfg.channel.error_rate = error_rate;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.tracker.max_turns == 0 {
            return Err(Error::Config("max_turns must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tracker.request_decay) {
            return Err(Error::Config("request_decay must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-turn diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub turn: usize,
    pub system_act: SystemAct,
    /// The user's true act (none after a system bye).
    pub user_act: Option<UserAct>,
    pub nbest: NBestList,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub belief: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episodic interface consumed by the agents.
pub trait Environment {
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

#[derive(Clone, Debug)]
pub struct DialogueEnv {
    ontology: Ontology,
    layout: BeliefLayout,
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    goal: Option<UserGoal>,
    memory: DialogueMemory,
    belief: Vec<f64>,
    turn: usize,
    done: bool,
}

impl DialogueEnv {
    pub fn new(ontology: Ontology, cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = BeliefLayout::new(&ontology, SummaryAction::count(ontology.num_informable()));
        let belief = layout.initial();
        Ok(Self {
            ontology,
            layout,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            goal: None,
            memory: DialogueMemory::default(),
            belief,
            turn: 0,
            done: true,
        })
    }

    /// Built-in ontology with the given config.
    pub fn builtin(cfg: EnvConfig, seed: u64) -> Result<Self> {
        Self::new(Ontology::builtin(), cfg, seed)
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn layout(&self) -> &BeliefLayout {
        &self.layout
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn belief_dim(&self) -> usize {
        self.layout.dim
    }

    pub fn num_actions(&self) -> usize {
        SummaryAction::count(self.ontology.num_informable())
    }

    pub fn goal(&self) -> Option<&UserGoal> {
        self.goal.as_ref()
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts a new dialogue with a freshly sampled goal.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        self.goal = Some(sample_goal(&self.ontology, &self.cfg.goal, &mut self.rng)?);
        self.memory = DialogueMemory::default();
        self.belief = self.layout.initial();
        self.turn = 0;
        self.done = false;
        Ok(self.belief.clone())
    }

    /// Expands a summary action into a full system act against the current belief.
    pub fn system_act(&self, action: SummaryAction) -> SystemAct {
        let b = &self.belief;
        let l = &self.layout;
        match action {
            SummaryAction::Request(slot) => SystemAct::Request { slot },
            SummaryAction::Confirm(slot) => SystemAct::Confirm {
                slot,
                value: l.top_two_values(b, slot)[0],
            },
            SummaryAction::Select(slot) => SystemAct::Select {
                slot,
                values: l.top_two_values(b, slot),
            },
            SummaryAction::Inform | SummaryAction::InformAlternatives => {
                let constraints = l.constraints(b);
                let start = match (action, self.memory.offered) {
                    (SummaryAction::InformAlternatives, Some(e)) => e + 1,
                    _ => 0,
                };
                match self.ontology.find_entity(&constraints, start) {
                    Some(entity) => SystemAct::Offer {
                        entity,
                        informs: (0..self.ontology.num_requestable())
                            .filter(|&r| l.request(b, r) > self.cfg.request_threshold)
                            .collect(),
                    },
                    None => SystemAct::NoMatch { constraints },
                }
            }
            SummaryAction::Repeat => SystemAct::Repeat,
            SummaryAction::RequestMore => SystemAct::RequestMore,
            SummaryAction::Bye => SystemAct::Bye,
        }
    }

    /// Whether the current offer satisfies the goal with nothing pending.
    fn successful(&self) -> bool {
        let goal = self.goal.as_ref().expect("active episode");
        match self.memory.offered {
            Some(e) => self.ontology.matches(e, &goal.constraints) && self.memory.pending(goal).is_empty(),
            None => false,
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode; call reset first".into()));
        }
        let summary = SummaryAction::from_index(action, self.ontology.num_informable()).ok_or(Error::IndexOutOfRange {
            what: "summary action",
            index: action,
            len: self.num_actions(),
        })?;
        let sys = self.system_act(summary);
        self.turn += 1;
        let mut reward = -self.cfg.turn_penalty;

        if sys == SystemAct::Bye {
            let success = self.successful();
            if success {
                reward += self.cfg.success_reward;
            }
            self.done = true;
            let mut belief = belief_update(&self.layout, &self.belief, &NBestList::default(), &sys, &self.cfg.tracker);
            self.mark_action(&mut belief, action);
            self.belief = belief;
            return Ok(StepOutcome {
                belief: self.belief.clone(),
                reward,
                done: true,
                info: StepInfo {
                    turn: self.turn,
                    system_act: sys,
                    user_act: None,
                    nbest: NBestList::default(),
                    success,
                },
            });
        }

        let goal = self.goal.as_ref().expect("active episode");
        let user = user_respond(&self.ontology, goal, &sys, &mut self.memory, &mut self.rng);
        let nbest = confuse(user, &self.cfg.channel, &self.ontology, &mut self.rng)?;

        let mut prior = self.belief.clone();
        if let SystemAct::Offer { informs, .. } = &sys {
            for &r in informs {
                prior[self.layout.requests.0 + r] = 0.0;
            }
        }
        let mut belief = belief_update(&self.layout, &prior, &nbest, &sys, &self.cfg.tracker);
        self.mark_action(&mut belief, action);
        let o = self.layout.offer;
        if let Some(e) = self.memory.offered {
            belief[o] = 1.0;
            belief[o + 1] = if self.ontology.matches(e, &self.layout.constraints(&belief)) { 1.0 } else { 0.0 };
        }
        self.belief = belief;
        self.done = self.turn >= self.cfg.tracker.max_turns;
        Ok(StepOutcome {
            belief: self.belief.clone(),
            reward,
            done: self.done,
            info: StepInfo {
                turn: self.turn,
                system_act: sys,
                user_act: Some(user),
                nbest,
                success: false,
            },
        })
    }

    fn mark_action(&self, belief: &mut [f64], action: usize) {
        let (at, n) = self.layout.last_action;
        belief[at..at + n].iter_mut().for_each(|x| *x = 0.0);
        belief[at + action] = 1.0;
    }
}

impl Environment for DialogueEnv {
    fn reset(&mut self) -> Result<Vec<f64>> {
        DialogueEnv::reset(self)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        DialogueEnv::step(self, action)
    }
}

/// Hand-written policy on the belief: say bye once the user does, fill
/// unknown slots, offer when something is pending or the offer is stale,
/// otherwise ask whether anything else is needed.
pub fn rule_policy(layout: &BeliefLayout, belief: &[f64]) -> usize {
    let slots = layout.slots.len();
    if layout.discourse(belief)[0] > 0.5 {
        return SummaryAction::Bye.index(slots);
    }
    if let Some(s) = (0..slots).find(|&s| layout.unknown(belief, s) > 0.5) {
        return SummaryAction::Request(s).index(slots);
    }
    let pending = (0..layout.requests.1).any(|r| layout.request(belief, r) > 0.5);
    let offered = belief[layout.offer] > 0.5;
    let consistent = belief[layout.offer + 1] > 0.5;
    if pending || !offered || !consistent {
        SummaryAction::Inform.index(slots)
    } else {
        SummaryAction::RequestMore.index(slots)
    }
}
