//! Semantic error channel: turns the true user act into an N-best list.
//!
//! With probability `e` the top hypothesis is a confusion of the true act
//! (a different value of the same slot with probability `value_substitution`,
//! otherwise a different act type); the true act then survives at rank two
//! with probability `keep_true`. Without a confusion the true act is on top
//! and, with probability `e`, a confused distractor follows it.
//!
//! Confidences: a single hypothesis scores `U(0.9, 1)`. Longer lists draw
//! `Dirichlet(top, other, .., other, null)`, sort the non-null weights in
//! descending order and assign them by rank, so they sum to less than one.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::acts::{NBestList, SlotValue, UserAct};
use super::ontology::Ontology;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub error_rate: f64,
    pub n_max: usize,
    pub value_substitution: f64,
    pub keep_true: f64,
    pub top_concentration: f64,
    pub other_concentration: f64,
    pub null_concentration: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            error_rate: 0.0,
            n_max: 3,
            value_substitution: 0.7,
            keep_true: 0.5,
            top_concentration: 5.0,
            other_concentration: 1.0,
            null_concentration: 0.5,
        }
    }
}

impl ChannelConfig {
    pub fn with_error_rate(error_rate: f64) -> Self {
        Self {
            error_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.error_rate) {
            return Err(Error::Config(format!("error rate must lie in [0, 1), got {}", self.error_rate)));
        }
        if self.n_max == 0 {
            return Err(Error::Config("N-best lists need room for one hypothesis".into()));
        }
        for (name, p) in [("value_substitution", self.value_substitution), ("keep_true", self.keep_true)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be a probability, got {p}")));
            }
        }
        for c in [self.top_concentration, self.other_concentration, self.null_concentration] {
            if !(c > 0.0) {
                return Err(Error::Config("Dirichlet concentrations must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Produces the N-best list observed by the system for `act`.
pub fn confuse<R: Rng + ?Sized>(act: UserAct, cfg: &ChannelConfig, ont: &Ontology, rng: &mut R) -> Result<NBestList> {
    cfg.validate()?;
    let e = cfg.error_rate;
    let mut acts = Vec::with_capacity(cfg.n_max);
    if e > 0.0 && rng.random_bool(e) {
        acts.push(substitute(act, cfg, ont, rng));
        if rng.random_bool(cfg.keep_true) {
            acts.push(act);
        }
    } else {
        acts.push(act);
        if e > 0.0 && rng.random_bool(e) {
            acts.push(substitute(act, cfg, ont, rng));
        }
    }
    acts.truncate(cfg.n_max);
    let conf = confidences(acts.len(), cfg, rng);
    Ok(NBestList::new(acts.into_iter().zip(conf).collect()))
}

fn confidences<R: Rng + ?Sized>(n: usize, cfg: &ChannelConfig, rng: &mut R) -> Vec<f64> {
    if n == 1 {
        return vec![rng.random_range(0.9..1.0)];
    }
    let mut draw = |shape: f64| Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    let mut w: Vec<f64> = std::iter::once(cfg.top_concentration)
        .chain(std::iter::repeat_n(cfg.other_concentration, n - 1))
        .map(&mut draw)
        .collect();
    let total = w.iter().sum::<f64>() + draw(cfg.null_concentration);
    w.iter_mut().for_each(|x| *x /= total);
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

/// A confusion of `act`: always different from it.
fn substitute<R: Rng + ?Sized>(act: UserAct, cfg: &ChannelConfig, ont: &Ontology, rng: &mut R) -> UserAct {
    if rng.random_bool(cfg.value_substitution) {
        match act {
            UserAct::Inform { slot, value } => {
                // values of the slot plus "dontcare", minus the true one
                let n = ont.num_values(slot) + 1;
                let true_idx = match value {
                    SlotValue::Value(v) => v,
                    SlotValue::DontCare => n - 1,
                };
                let mut j = rng.random_range(0..n - 1);
                if j >= true_idx {
                    j += 1;
                }
                let value = if j == n - 1 { SlotValue::DontCare } else { SlotValue::Value(j) };
                return UserAct::Inform { slot, value };
            }
            UserAct::Request { slot } if ont.num_requestable() > 1 => {
                let mut j = rng.random_range(0..ont.num_requestable() - 1);
                if j >= slot {
                    j += 1;
                }
                return UserAct::Request { slot: j };
            }
            _ => {}
        }
    }
    loop {
        let candidate = match rng.random_range(0..6) {
            0 => {
                let slot = rng.random_range(0..ont.num_informable());
                UserAct::Inform {
                    slot,
                    value: SlotValue::Value(rng.random_range(0..ont.num_values(slot))),
                }
            }
            1 if ont.num_requestable() > 0 => UserAct::Request {
                slot: rng.random_range(0..ont.num_requestable()),
            },
            1 => continue,
            2 => UserAct::Affirm,
            3 => UserAct::Negate,
            4 => UserAct::Hello,
            _ => UserAct::Bye,
        };
        if candidate.act_type() != act.act_type() {
            return candidate;
        }
    }
}
