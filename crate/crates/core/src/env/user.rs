//! Rule-based, goal-driven user simulator.

use rand::Rng;

use super::acts::{SlotValue, SystemAct, UserAct};
use super::ontology::{Ontology, UserGoal};

/// What the user remembers of the dialogue so far.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DialogueMemory {
    /// Entity most recently offered by the system.
    pub offered: Option<usize>,
    /// Requestable slots the system has informed for `offered`.
    pub answered: Vec<usize>,
    pub last_act: Option<UserAct>,
}

impl DialogueMemory {
    /// Goal requests not yet answered for the offered entity.
    pub fn pending(&self, goal: &UserGoal) -> Vec<usize> {
        goal.requests.iter().copied().filter(|r| !self.answered.contains(r)).collect()
    }
}

fn inform_goal(goal: &UserGoal, slot: usize) -> UserAct {
    UserAct::Inform {
        slot,
        value: goal.constraints[slot].map_or(SlotValue::DontCare, SlotValue::Value),
    }
}

/// First constrained slot on which `stated` disagrees with the goal, or a
/// slot the user does not care about but the system constrained.
fn first_violation(goal: &UserGoal, stated: &[Option<usize>]) -> Option<usize> {
    goal.constraints
        .iter()
        .zip(stated)
        .position(|(g, s)| matches!((g, s), (Some(g), Some(s)) if g != s))
        .or_else(|| goal.constraints.iter().zip(stated).position(|(g, s)| g.is_none() && s.is_some()))
}

/// After an acceptable offer: ask for the next pending request, else bye.
fn follow_up(goal: &UserGoal, mem: &DialogueMemory) -> UserAct {
    match mem.pending(goal).first() {
        Some(&slot) => UserAct::Request { slot },
        None => UserAct::Bye,
    }
}

/// The user's reply to `sys`; updates `mem`.
pub fn user_respond<R: Rng + ?Sized>(ont: &Ontology, goal: &UserGoal, sys: &SystemAct, mem: &mut DialogueMemory, rng: &mut R) -> UserAct {
    let act = match sys {
        SystemAct::Hello => UserAct::Hello,
        SystemAct::Request { slot } | SystemAct::Select { slot, .. } => inform_goal(goal, *slot),
        SystemAct::Confirm { slot, value } => match goal.constraints[*slot] {
            Some(g) if g == *value => UserAct::Affirm,
            Some(_) => UserAct::Negate,
            None => inform_goal(goal, *slot),
        },
        SystemAct::Offer { entity, informs } => {
            if mem.offered != Some(*entity) {
                mem.offered = Some(*entity);
                mem.answered.clear();
            }
            for r in informs {
                if !mem.answered.contains(r) {
                    mem.answered.push(*r);
                }
            }
            let values: Vec<Option<usize>> = ont.entities[*entity].values.iter().map(|&v| Some(v)).collect();
            // an entity only violates the slots the user constrained
            let wrong = goal
                .constraints
                .iter()
                .zip(&values)
                .position(|(g, v)| matches!((g, v), (Some(g), Some(v)) if g != v));
            match wrong {
                Some(slot) => inform_goal(goal, slot),
                None => follow_up(goal, mem),
            }
        }
        SystemAct::NoMatch { constraints } => {
            let slot = first_violation(goal, constraints).unwrap_or_else(|| first_constraint(goal));
            inform_goal(goal, slot)
        }
        SystemAct::Repeat => mem.last_act.unwrap_or(UserAct::Hello),
        SystemAct::RequestMore => match mem.offered {
            Some(e) if ont.matches(e, &goal.constraints) => follow_up(goal, mem),
            _ => {
                let constrained: Vec<usize> = (0..goal.constraints.len()).filter(|&s| goal.constraints[s].is_some()).collect();
                inform_goal(goal, constrained[rng.random_range(0..constrained.len())])
            }
        },
        SystemAct::Bye => UserAct::Bye,
    };
    mem.last_act = Some(act);
    act
}

fn first_constraint(goal: &UserGoal) -> usize {
    goal.constraints.iter().position(Option::is_some).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn goal(o: &Ontology) -> UserGoal {
        // thai (0) in the north (0), any price, wants the phone
        let g = UserGoal {
            constraints: vec![Some(0), Some(0), None],
            requests: vec![0],
        };
        assert!(g.is_satisfiable(o));
        g
    }

    #[test]
    fn answers_requests_and_confirms() {
        let o = Ontology::builtin();
        let g = goal(&o);
        let mut m = DialogueMemory::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = user_respond(&o, &g, &SystemAct::Request { slot: 0 }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Inform { slot: 0, value: SlotValue::Value(0) });
        let r = user_respond(&o, &g, &SystemAct::Request { slot: 2 }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Inform { slot: 2, value: SlotValue::DontCare });
        assert_eq!(user_respond(&o, &g, &SystemAct::Confirm { slot: 1, value: 0 }, &mut m, &mut rng), UserAct::Affirm);
        assert_eq!(user_respond(&o, &g, &SystemAct::Confirm { slot: 1, value: 2 }, &mut m, &mut rng), UserAct::Negate);
        assert_eq!(user_respond(&o, &g, &SystemAct::Repeat, &mut m, &mut rng), UserAct::Negate);
    }

    #[test]
    fn offers_lead_to_requests_then_bye() {
        let o = Ontology::builtin();
        let g = goal(&o);
        let mut m = DialogueMemory::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let good = o.find_entity(&g.constraints, 0).unwrap();
        let bad = (0..o.entities.len()).find(|&e| o.entities[e].values[0] != 0).unwrap();
        let r = user_respond(&o, &g, &SystemAct::Offer { entity: bad, informs: vec![] }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Inform { slot: 0, value: SlotValue::Value(0) });
        let r = user_respond(&o, &g, &SystemAct::Offer { entity: good, informs: vec![] }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Request { slot: 0 });
        let r = user_respond(&o, &g, &SystemAct::Offer { entity: good, informs: vec![0] }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Bye);
        assert_eq!(user_respond(&o, &g, &SystemAct::RequestMore, &mut m, &mut rng), UserAct::Bye);
    }

    #[test]
    fn no_match_points_at_the_wrong_constraint() {
        let o = Ontology::builtin();
        let g = goal(&o);
        let mut m = DialogueMemory::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = user_respond(&o, &g, &SystemAct::NoMatch { constraints: vec![Some(0), Some(3), None] }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Inform { slot: 1, value: SlotValue::Value(0) });
        let r = user_respond(&o, &g, &SystemAct::NoMatch { constraints: vec![Some(0), Some(0), Some(1)] }, &mut m, &mut rng);
        assert_eq!(r, UserAct::Inform { slot: 2, value: SlotValue::DontCare });
    }
}
