//! Slots, values and the entity database.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/ontology.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformableSlot {
    pub name: String,
    pub values: Vec<String>,
}

/// Serialized form: entity rows are flat maps from slot name to value.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawOntology {
    informable: Vec<InformableSlot>,
    requestable: Vec<String>,
    entities: Vec<BTreeMap<String, String>>,
}

/// A database row with informable values stored as indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    pub name: String,
    pub values: Vec<usize>,
    pub info: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ontology {
    pub informable: Vec<InformableSlot>,
    pub requestable: Vec<String>,
    pub entities: Vec<Entity>,
}

impl Ontology {
    /// The toy restaurant domain shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("built-in ontology is valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawOntology = serde_json::from_str(s)?;
        if raw.informable.is_empty() {
            return Err(Error::Ontology("no informable slots".into()));
        }
        if raw.entities.is_empty() {
            return Err(Error::Ontology("empty entity database".into()));
        }
        for slot in &raw.informable {
            if slot.values.len() < 2 {
                return Err(Error::Ontology(format!("slot `{}` needs at least two values", slot.name)));
            }
        }
        let mut entities = Vec::with_capacity(raw.entities.len());
        for (i, row) in raw.entities.into_iter().enumerate() {
            let name = row.get("name").cloned().unwrap_or_else(|| format!("entity {i}"));
            let mut values = Vec::with_capacity(raw.informable.len());
            for slot in &raw.informable {
                let v = row
                    .get(&slot.name)
                    .ok_or_else(|| Error::Ontology(format!("`{name}` has no value for `{}`", slot.name)))?;
                let idx = slot
                    .values
                    .iter()
                    .position(|x| x == v)
                    .ok_or_else(|| Error::Ontology(format!("`{name}`: `{v}` is not a value of `{}`", slot.name)))?;
                values.push(idx);
            }
            for r in &raw.requestable {
                if !row.contains_key(r) {
                    return Err(Error::Ontology(format!("`{name}` has no `{r}`")));
                }
            }
            entities.push(Entity { name, values, info: row });
        }
        Ok(Self {
            informable: raw.informable,
            requestable: raw.requestable,
            entities,
        })
    }

    pub fn num_informable(&self) -> usize {
        self.informable.len()
    }

    pub fn num_requestable(&self) -> usize {
        self.requestable.len()
    }

    pub fn num_values(&self, slot: usize) -> usize {
        self.informable[slot].values.len()
    }

    /// Index of the first entity, at or after `start` (cyclically), whose
    /// values agree with every `Some` constraint.
    pub fn find_entity(&self, constraints: &[Option<usize>], start: usize) -> Option<usize> {
        let n = self.entities.len();
        (0..n)
            .map(|i| (start + i) % n)
            .find(|&i| self.matches(i, constraints))
    }

    pub fn matches(&self, entity: usize, constraints: &[Option<usize>]) -> bool {
        let e = &self.entities[entity];
        constraints
            .iter()
            .zip(&e.values)
            .all(|(c, v)| c.is_none_or(|c| c == *v))
    }
}

/// What the simulated user wants: values for a subset of informable slots,
/// plus requestable slots to ask about once a suitable entity is offered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    pub constraints: Vec<Option<usize>>,
    pub requests: Vec<usize>,
}

impl UserGoal {
    pub fn is_satisfiable(&self, ont: &Ontology) -> bool {
        ont.find_entity(&self.constraints, 0).is_some()
    }
}

/// Goal sampling knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalConfig {
    /// Probability that an informable slot is constrained.
    pub constraint_prob: f64,
    /// Probability that a requestable slot is requested.
    pub request_prob: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        Self {
            constraint_prob: 0.75,
            request_prob: 0.5,
        }
    }
}

/// Draws a goal with at least one constraint, values uniform per slot,
/// rejecting goals no entity satisfies.
pub fn sample_goal<R: Rng + ?Sized>(ont: &Ontology, cfg: &GoalConfig, rng: &mut R) -> Result<UserGoal> {
    for _ in 0..100 {
        let mut constraints: Vec<Option<usize>> = (0..ont.num_informable())
            .map(|s| rng.random_bool(cfg.constraint_prob).then(|| rng.random_range(0..ont.num_values(s))))
            .collect();
        if constraints.iter().all(Option::is_none) {
            let s = rng.random_range(0..ont.num_informable());
            constraints[s] = Some(rng.random_range(0..ont.num_values(s)));
        }
        let requests = (0..ont.num_requestable()).filter(|_| rng.random_bool(cfg.request_prob)).collect();
        let goal = UserGoal { constraints, requests };
        if goal.is_satisfiable(ont) {
            return Ok(goal);
        }
    }
    Err(Error::Ontology("no satisfiable goal after 100 draws".into()))
}
