//! Belief tracking over the semantic N-best input.
//!
//! Each informable slot keeps a distribution over its values, "dontcare" and
//! "unknown". An N-best list carrying inform mass `P(v)` for slot `s`, with
//! `m = sum_v P(v)`, updates the slot by the focus rule
//!
//! ```text
//! b'(v) = (1 - m) b(v) + P(v)        (values and dontcare)
//! b'(unknown) = (1 - m) b(unknown)
//! ```
//!
//! An `affirm` after `confirm(s=v)` counts as an inform of `v`; a `negate`
//! with confidence `p` moves `p b(v)` from `v` back to "unknown". Request
//! probabilities decay by a constant factor and add new request evidence.

use serde::{Deserialize, Serialize};

use super::acts::{NBestList, SlotValue, SystemAct, UserAct};
use super::ontology::Ontology;

/// Positions of the feature blocks inside the flat belief vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeliefLayout {
    /// `(offset, number of values)` per informable slot; each block has two
    /// extra bins, dontcare then unknown.
    pub slots: Vec<(usize, usize)>,
    pub requests: (usize, usize),
    pub last_action: (usize, usize),
    pub turn: usize,
    /// `[bye, affirm, negate, unexplained]` mass of the latest N-best list.
    pub discourse: usize,
    /// `[entity offered, offer consistent with the belief]`.
    pub offer: usize,
    pub dim: usize,
}

pub const DISCOURSE_BINS: usize = 4;

impl BeliefLayout {
    pub fn new(ont: &Ontology, num_actions: usize) -> Self {
        let mut off = 0;
        let slots = (0..ont.num_informable())
            .map(|s| {
                let n = ont.num_values(s);
                let at = off;
                off += n + 2;
                (at, n)
            })
            .collect();
        let requests = (off, ont.num_requestable());
        off += ont.num_requestable();
        let last_action = (off, num_actions);
        off += num_actions;
        let turn = off;
        let discourse = turn + 1;
        let offer = discourse + DISCOURSE_BINS;
        Self {
            slots,
            requests,
            last_action,
            turn,
            discourse,
            offer,
            dim: offer + 2,
        }
    }

    /// All slot mass on "unknown", no requests, no history.
    pub fn initial(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for &(at, n) in &self.slots {
            b[at + n + 1] = 1.0;
        }
        b
    }

    /// Values, dontcare and unknown bins of slot `s`.
    pub fn slot<'a>(&self, b: &'a [f64], s: usize) -> &'a [f64] {
        let (at, n) = self.slots[s];
        &b[at..at + n + 2]
    }

    pub fn unknown(&self, b: &[f64], s: usize) -> f64 {
        let (at, n) = self.slots[s];
        b[at + n + 1]
    }

    pub fn request(&self, b: &[f64], r: usize) -> f64 {
        b[self.requests.0 + r]
    }

    pub fn discourse<'a>(&self, b: &'a [f64]) -> &'a [f64] {
        &b[self.discourse..self.discourse + DISCOURSE_BINS]
    }

    /// The slot's most probable bin, when that bin is a concrete value.
    pub fn mode(&self, b: &[f64], s: usize) -> Option<usize> {
        let block = self.slot(b, s);
        let n = self.slots[s].1;
        let best = argmax(block);
        (best < n).then_some(best)
    }

    /// Indices of the two most probable concrete values of slot `s`.
    pub fn top_two_values(&self, b: &[f64], s: usize) -> [usize; 2] {
        let (at, n) = self.slots[s];
        let vals = &b[at..at + n];
        let first = argmax(vals);
        let second = (0..n).filter(|&i| i != first).max_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(j.cmp(&i))).unwrap_or(first);
        [first, second]
    }

    /// Mode constraint per slot (`None` when the mode is dontcare/unknown).
    pub fn constraints(&self, b: &[f64]) -> Vec<Option<usize>> {
        (0..self.slots.len()).map(|s| self.mode(b, s)).collect()
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub request_decay: f64,
    pub max_turns: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            request_decay: 0.9,
            max_turns: 25,
        }
    }
}

/// Folds one N-best list into the belief. With an empty list only the turn
/// feature advances.
pub fn belief_update(layout: &BeliefLayout, belief: &[f64], nbest: &NBestList, last: &SystemAct, cfg: &TrackerConfig) -> Vec<f64> {
    let mut b = belief.to_vec();
    b[layout.turn] = (b[layout.turn] + 1.0 / cfg.max_turns as f64).min(1.0);
    if nbest.is_empty() {
        return b;
    }

    let confirmed = match *last {
        SystemAct::Confirm { slot, value } => Some((slot, value)),
        _ => None,
    };

    let mut bye = 0.0;
    let mut affirm = 0.0;
    let mut negate = 0.0;
    let mut req_evidence = vec![0.0; layout.requests.1];
    let mut inform: Vec<Vec<f64>> = layout.slots.iter().map(|&(_, n)| vec![0.0; n + 1]).collect();
    for &(act, c) in &nbest.hyps {
        match act {
            UserAct::Inform { slot, value } => {
                let n = layout.slots[slot].1;
                let i = match value {
                    SlotValue::Value(v) => v,
                    SlotValue::DontCare => n,
                };
                inform[slot][i] += c;
            }
            UserAct::Request { slot } => req_evidence[slot] += c,
            UserAct::Affirm => {
                affirm += c;
                if let Some((s, v)) = confirmed {
                    inform[s][v] += c;
                }
            }
            UserAct::Negate => negate += c,
            UserAct::Bye => bye += c,
            UserAct::Hello => {}
        }
    }

    for (s, p) in inform.iter().enumerate() {
        let m: f64 = p.iter().sum();
        if m == 0.0 {
            continue;
        }
        let (at, n) = layout.slots[s];
        for i in 0..=n + 1 {
            let evidence = p.get(i).copied().unwrap_or(0.0);
            b[at + i] = (1.0 - m) * b[at + i] + evidence;
        }
    }
    if let Some((s, v)) = confirmed {
        if negate > 0.0 {
            let (at, n) = layout.slots[s];
            let moved = negate * b[at + v];
            b[at + v] -= moved;
            b[at + n + 1] += moved;
        }
    }

    let (ro, rn) = layout.requests;
    for r in 0..rn {
        b[ro + r] = (cfg.request_decay * b[ro + r] + req_evidence[r]).clamp(0.0, 1.0);
    }

    let d = layout.discourse;
    b[d] = bye;
    b[d + 1] = affirm;
    b[d + 2] = negate;
    b[d + 3] = (1.0 - nbest.total()).max(0.0);
    b
}
