//! Agenda-based simulated user: goals, responses, channel noise and success.

mod agenda;
mod noise;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acts::{ActType, DialogueAct, FillerValue};
use crate::entities::ConversationalWorld;
use crate::error::{Error, Result};
use crate::ontology::{record_matches, Ontology, DONTCARE, NAME_SLOT};
use crate::policy::NO_MATCH;

pub use agenda::{Agenda, GoalChange, UserConfig, UserSim};
pub use noise::{apply_error_model, ErrorModelConfig};

/// Attempts before [`sample_goal`] gives up.
pub const MAX_GOAL_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectGoal {
    pub object: String,
    /// Slot to value or `dontcare`, for every informable slot.
    pub constraints: BTreeMap<String, String>,
    /// Information slots the user asks for once satisfied.
    pub requests: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    /// Objects in the order the user discusses them.
    pub objects: Vec<ObjectGoal>,
    /// `(relation id, attribute)` pairs the user intends as equal.
    pub relations: BTreeSet<(String, String)>,
}

impl UserGoal {
    pub fn object(&self, id: &str) -> Option<&ObjectGoal> {
        self.objects.iter().find(|g| g.object == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut ObjectGoal> {
        self.objects.iter_mut().find(|g| g.object == id)
    }

    pub fn order(&self) -> Vec<&str> {
        self.objects.iter().map(|g| g.object.as_str()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// World declaration order.
    Fixed,
    /// Declaration order or its reverse with equal probability.
    Alternating,
}

/// Probability that an unrelated slot is left open as `dontcare`.
pub const P_DONTCARE: f64 = 0.1;

/// Samples a goal from KB records so it is satisfiable by construction.
/// Every object after the first shares a non-empty, uniformly chosen subset
/// of relation attributes with one earlier related object.
pub fn sample_goal<R: Rng>(
    rng: &mut R,
    ontology: &Ontology,
    world: &ConversationalWorld,
    order: OrderMode,
) -> Result<UserGoal> {
    let mut ids: Vec<&str> = world.objects.iter().map(|o| o.id.as_str()).collect();
    if order == OrderMode::Alternating && rng.random_bool(0.5) {
        ids.reverse();
    }
    'attempt: for _ in 0..MAX_GOAL_ATTEMPTS {
        let mut records = BTreeMap::new();
        let mut relations = BTreeSet::new();
        for (k, id) in ids.iter().enumerate() {
            let obj = world.object(id)?;
            let rows = ontology.kb.records(&obj.ty.name);
            let earlier: Vec<_> = world
                .relations_of(id)
                .filter(|r| ids[..k].contains(&r.other_endpoint(id).expect("incident")))
                .collect();
            let mut candidates: Vec<_> = rows.iter().collect();
            if let Some(rel) = earlier.choose(rng) {
                let other = rel.other_endpoint(id).expect("incident");
                let other_record: &crate::ontology::Record = records[other];
                let n = rel.attributes.len();
                let mask = rng.random_range(1..(1u32 << n));
                let shared: Vec<_> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &rel.attributes[i]).collect();
                candidates.retain(|r| {
                    shared.iter().all(|a| {
                        let (own, theirs) = rel.slots_for(id, a);
                        r.get(&own) == other_record.get(&theirs)
                    })
                });
                for a in shared {
                    relations.insert((rel.id.clone(), a.name.clone()));
                }
            }
            match candidates.choose(rng) {
                Some(r) => {
                    records.insert(*id, *r);
                }
                None => continue 'attempt,
            }
        }
        let mut objects = Vec::new();
        for id in &ids {
            let obj = world.object(id)?;
            let record = records[id];
            let related: BTreeSet<String> = world
                .relations_of(id)
                .flat_map(|r| {
                    r.attributes
                        .iter()
                        .filter(|a| relations.contains(&(r.id.clone(), a.name.clone())))
                        .map(|a| r.slots_for(id, a).0)
                        .collect::<Vec<_>>()
                })
                .collect();
            let constraints = obj
                .ty
                .informable
                .iter()
                .map(|s| {
                    let v = if !related.contains(&s.name) && rng.random_bool(P_DONTCARE) {
                        DONTCARE.to_string()
                    } else {
                        record.get(&s.name).expect("records carry every informable slot").to_string()
                    };
                    (s.name.clone(), v)
                })
                .collect();
            let info = obj.ty.info_slots();
            let n = rng.random_range(0..=2.min(info.len()));
            let mut requests: Vec<String> = info.choose_multiple(rng, n).map(|s| s.to_string()).collect();
            requests.sort_by_key(|s| obj.ty.requestable.iter().position(|r| r == s));
            objects.push(ObjectGoal {
                object: id.to_string(),
                constraints,
                requests,
            });
        }
        return Ok(UserGoal { objects, relations });
    }
    Err(Error::Unsatisfiable(MAX_GOAL_ATTEMPTS))
}

/// Per object: whether the last offer satisfies the goal's constraints
/// literally and every requested slot was given for that record.
///
/// Relation constraints are judged through the literal values stored in the
/// goal, so a goal change of one object does not retroactively fail the other.
pub fn evaluate_success(goal: &UserGoal, ontology: &Ontology, world: &ConversationalWorld, system_acts: &[DialogueAct]) -> BTreeMap<String, bool> {
    let mut out = BTreeMap::new();
    for g in &goal.objects {
        let Ok(obj) = world.object(&g.object) else {
            out.insert(g.object.clone(), false);
            continue;
        };
        let mut offered: Option<String> = None;
        let mut answered: BTreeSet<String> = BTreeSet::new();
        for act in system_acts {
            if act.act_type != ActType::Inform {
                continue;
            }
            let own: Vec<_> = act.fillers.iter().filter(|f| f.slot.entity == g.object).collect();
            let Some(name) = own.iter().find(|f| f.slot.slot == NAME_SLOT).and_then(|f| match &f.value {
                Some(FillerValue::Literal(v)) => Some(v.clone()),
                _ => None,
            }) else {
                continue;
            };
            if name == NO_MATCH {
                continue;
            }
            if offered.as_deref() != Some(name.as_str()) {
                answered.clear();
                offered = Some(name);
            }
            for f in own {
                if f.literal_value().is_some() {
                    answered.insert(f.slot.slot.clone());
                }
            }
        }
        let ok = offered
            .and_then(|name| ontology.kb.record_by_name(&obj.ty.name, &name))
            .is_some_and(|record| {
                record_matches(record, &g.constraints) && g.requests.iter().all(|s| answered.contains(s))
            });
        out.insert(g.object.clone(), ok);
    }
    out
}
