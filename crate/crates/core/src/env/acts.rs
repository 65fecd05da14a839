//! Dialogue acts exchanged between the system and the simulated user.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActType {
    Inform,
    Request,
    Confirm,
    Negate,
    Affirm,
    Hello,
    Bye,
    Select,
    Repeat,
}

/// An informable value or "don't care".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotValue {
    Value(usize),
    DontCare,
}

/// A user act: `inform(slot=value)`, `request(slot)`, `affirm()`, ...
///
/// For `inform` the slot is informable; for `request` it is requestable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserAct {
    Inform { slot: usize, value: SlotValue },
    Request { slot: usize },
    Affirm,
    Negate,
    Hello,
    Bye,
}

impl UserAct {
    pub fn act_type(&self) -> ActType {
        match self {
            UserAct::Inform { .. } => ActType::Inform,
            UserAct::Request { .. } => ActType::Request,
            UserAct::Affirm => ActType::Affirm,
            UserAct::Negate => ActType::Negate,
            UserAct::Hello => ActType::Hello,
            UserAct::Bye => ActType::Bye,
        }
    }
}

/// A full system act, produced from a summary action by the environment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemAct {
    Hello,
    Request { slot: usize },
    Confirm { slot: usize, value: usize },
    Select { slot: usize, values: [usize; 2] },
    /// Offers an entity and informs the listed requestable slots of it.
    Offer { entity: usize, informs: Vec<usize> },
    /// No entity satisfies the stated constraints.
    NoMatch { constraints: Vec<Option<usize>> },
    Repeat,
    RequestMore,
    Bye,
}

impl SystemAct {
    pub fn act_type(&self) -> ActType {
        match self {
            SystemAct::Hello => ActType::Hello,
            SystemAct::Request { .. } => ActType::Request,
            SystemAct::Confirm { .. } => ActType::Confirm,
            SystemAct::Select { .. } => ActType::Select,
            SystemAct::Offer { .. } | SystemAct::NoMatch { .. } => ActType::Inform,
            SystemAct::Repeat => ActType::Repeat,
            SystemAct::RequestMore => ActType::Request,
            SystemAct::Bye => ActType::Bye,
        }
    }
}

/// Ranked user-act hypotheses with confidences; descending, summing to at
/// most one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub hyps: Vec<(UserAct, f64)>,
}

impl NBestList {
    pub fn new(hyps: Vec<(UserAct, f64)>) -> Self {
        Self { hyps }
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    pub fn top(&self) -> Option<&UserAct> {
        self.hyps.first().map(|(a, _)| a)
    }

    pub fn total(&self) -> f64 {
        self.hyps.iter().map(|(_, c)| c).sum()
    }
}

/// The fixed summary-action set the policies choose from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SummaryAction {
    Request(usize),
    Confirm(usize),
    Select(usize),
    Inform,
    InformAlternatives,
    Repeat,
    RequestMore,
    Bye,
}

impl SummaryAction {
    /// Action count for an ontology with `slots` informable slots.
    pub fn count(slots: usize) -> usize {
        3 * slots + 5
    }

    pub fn from_index(i: usize, slots: usize) -> Option<Self> {
        Some(match i {
            i if i < slots => SummaryAction::Request(i),
            i if i < 2 * slots => SummaryAction::Confirm(i - slots),
            i if i < 3 * slots => SummaryAction::Select(i - 2 * slots),
            i => match i - 3 * slots {
                0 => SummaryAction::Inform,
                1 => SummaryAction::InformAlternatives,
                2 => SummaryAction::Repeat,
                3 => SummaryAction::RequestMore,
                4 => SummaryAction::Bye,
                _ => return None,
            },
        })
    }

    pub fn index(&self, slots: usize) -> usize {
        match *self {
            SummaryAction::Request(s) => s,
            SummaryAction::Confirm(s) => slots + s,
            SummaryAction::Select(s) => 2 * slots + s,
            SummaryAction::Inform => 3 * slots,
            SummaryAction::InformAlternatives => 3 * slots + 1,
            SummaryAction::Repeat => 3 * slots + 2,
            SummaryAction::RequestMore => 3 * slots + 3,
            SummaryAction::Bye => 3 * slots + 4,
        }
    }
}
