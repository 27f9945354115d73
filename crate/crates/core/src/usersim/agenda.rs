//! The simulated user's reaction rules.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::UserGoal;
use crate::acts::{ActType, DialogueAct, FillerValue, QualifiedSlot, SlotFiller};
use crate::entities::ConversationalWorld;
use crate::ontology::{record_matches, Ontology, Record, DONTCARE, NAME_SLOT};
use crate::policy::NO_MATCH;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    /// Probability of addressing a relation instead of the value.
    pub r: f64,
    /// Consecutive unhelpful system turns tolerated before hanging up.
    #[serde(default = "default_patience")]
    pub patience: u32,
    /// Probability of asking for an alternative after the first good offer.
    #[serde(default = "default_p_reqalts")]
    pub p_reqalts: f64,
    /// Probability of changing a related constraint when no alternative exists.
    #[serde(default = "default_p_goal_change")]
    pub p_goal_change: f64,
    /// Probability that a slot is mentioned in the opening act for an object.
    #[serde(default = "default_p_initial")]
    pub p_initial: f64,
}

fn default_patience() -> u32 {
    5
}
fn default_p_reqalts() -> f64 {
    0.5
}
fn default_p_goal_change() -> f64 {
    1.0
}
fn default_p_initial() -> f64 {
    0.6
}

impl UserConfig {
    pub fn with_r(r: f64) -> Self {
        UserConfig {
            r,
            patience: default_patience(),
            p_reqalts: default_p_reqalts(),
            p_goal_change: default_p_goal_change(),
            p_initial: default_p_initial(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalChange {
    pub object: String,
    pub slot: String,
    pub old: String,
    pub new: String,
}

/// Pending user acts plus patience bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Agenda {
    stack: Vec<DialogueAct>,
    pub unhelpful: u32,
    pub goal_changes: Vec<GoalChange>,
}

impl Agenda {
    pub fn push(&mut self, act: DialogueAct) {
        self.stack.push(act);
    }

    pub fn pop(&mut self) -> Option<DialogueAct> {
        self.stack.pop()
    }

    pub fn clear(&mut self) {
        self.stack.clear();
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }
}

/// One simulated user for one dialogue.
pub struct UserSim<'a> {
    ontology: &'a Ontology,
    world: &'a ConversationalWorld,
    config: UserConfig,
    goal: UserGoal,
    current: usize,
    agenda: Agenda,
    discussed: BTreeSet<String>,
    conveyed: BTreeMap<String, BTreeSet<String>>,
    /// Latest offered record per object, as the user understood it.
    offers: BTreeMap<String, Record>,
    /// Latest literal value the system attached to each slot.
    system_said: BTreeMap<(String, String), String>,
    answered: BTreeMap<String, BTreeSet<String>>,
    requested_info: BTreeSet<String>,
    reqalts_done: BTreeSet<String>,
    awaiting_alternative: BTreeSet<String>,
    relation_acts: usize,
    last_system_act: Option<DialogueAct>,
    finished: bool,
}

impl<'a> UserSim<'a> {
    pub fn new(ontology: &'a Ontology, world: &'a ConversationalWorld, goal: UserGoal, config: UserConfig) -> Self {
        UserSim {
            ontology,
            world,
            config,
            goal,
            current: 0,
            agenda: Agenda::default(),
            discussed: BTreeSet::new(),
            conveyed: BTreeMap::new(),
            offers: BTreeMap::new(),
            system_said: BTreeMap::new(),
            answered: BTreeMap::new(),
            requested_info: BTreeSet::new(),
            reqalts_done: BTreeSet::new(),
            awaiting_alternative: BTreeSet::new(),
            relation_acts: 0,
            last_system_act: None,
            finished: false,
        }
    }

    /// The goal as it stands, including goal changes so far.
    pub fn goal(&self) -> &UserGoal {
        &self.goal
    }

    pub fn agenda(&self) -> &Agenda {
        &self.agenda
    }

    pub fn goal_changes(&self) -> &[GoalChange] {
        &self.agenda.goal_changes
    }

    /// Number of user acts that carried a relation filler.
    pub fn relation_acts(&self) -> usize {
        self.relation_acts
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Object currently discussed.
    pub fn current_object(&self) -> &str {
        &self.goal.objects[self.current.min(self.goal.objects.len() - 1)].object
    }

    /// The literal value the user means for `slot` (used to resolve relation
    /// fillers in noise).
    pub fn intended(&self, slot: &QualifiedSlot) -> Option<String> {
        self.goal.object(&slot.entity)?.constraints.get(&slot.slot).cloned()
    }

    fn related(&self, object: &str, slot: &str) -> Option<(String, String)> {
        self.world.relations_of(object).find_map(|rel| {
            let (attr, other_slot) = rel.attribute_for(object, slot)?;
            self.goal
                .relations
                .contains(&(rel.id.clone(), attr.name.clone()))
                .then(|| (rel.other_endpoint(object).expect("incident").to_string(), other_slot.to_string()))
        })
    }

    /// How the user states its constraint on `slot`: a relation reference with
    /// probability r when the related object was discussed, a literal otherwise.
    /// A relation is not repeated when the system already named the value it
    /// resolves to.
    fn express<R: Rng>(&mut self, rng: &mut R, object: &str, slot: &str) -> SlotFiller {
        let value = self.goal.object(object).expect("goal object").constraints[slot].clone();
        if let Some((other, other_slot)) = self.related(object, slot) {
            if self.discussed.contains(&other) && value != DONTCARE {
                let resolves_to = self
                    .offers
                    .get(&other)
                    .and_then(|r| r.get(&other_slot).map(str::to_string))
                    .or_else(|| self.goal.object(&other).map(|g| g.constraints[&other_slot].clone()));
                let already_said = self.system_said.get(&(object.to_string(), slot.to_string()));
                let pointless = already_said.is_some() && already_said == resolves_to.as_ref();
                if !pointless && rng.random_bool(self.config.r) {
                    return SlotFiller::relation(object, slot, &other, &other_slot);
                }
            }
        }
        SlotFiller::literal(object, slot, &value)
    }

    fn opening_act<R: Rng>(&mut self, rng: &mut R) -> DialogueAct {
        let object = self.current_object().to_string();
        let goal = self.goal.object(&object).expect("goal object").clone();
        let ty = &self.world.object(&object).expect("world object").ty;
        let mut slots: Vec<&str> = ty
            .informable
            .iter()
            .map(|s| s.name.as_str())
            .filter(|s| goal.constraints[*s] != DONTCARE)
            .filter(|_| rng.random_bool(self.config.p_initial))
            .collect();
        if slots.is_empty() {
            let all: Vec<&str> = ty
                .informable
                .iter()
                .map(|s| s.name.as_str())
                .filter(|s| goal.constraints[*s] != DONTCARE)
                .collect();
            match all.choose(rng) {
                Some(s) => slots.push(s),
                None => slots.push(&ty.informable[0].name),
            }
        }
        let fillers = slots.into_iter().map(|s| self.express(rng, &object, s)).collect();
        DialogueAct::new(ActType::Inform, fillers)
    }

    fn emit(&mut self, act: DialogueAct) -> DialogueAct {
        if act.act_type == ActType::Bye {
            self.finished = true;
            return act;
        }
        for f in &act.fillers {
            if f.value.is_some() {
                self.conveyed.entry(f.slot.entity.clone()).or_default().insert(f.slot.slot.clone());
            }
        }
        if let Some(f) = act.fillers.first() {
            self.discussed.insert(f.slot.entity.clone());
        } else {
            self.discussed.insert(self.current_object().to_string());
        }
        if act.has_relation() {
            self.relation_acts += 1;
        }
        act
    }

    fn is_conveyed(&self, object: &str, slot: &str) -> bool {
        self.conveyed.get(object).is_some_and(|s| s.contains(slot))
    }

    /// Moves on to the next object, or ends the dialogue after the last one.
    fn next_object<R: Rng>(&mut self, rng: &mut R) -> DialogueAct {
        self.current += 1;
        if self.current >= self.goal.objects.len() {
            return DialogueAct::bye();
        }
        self.opening_act(rng)
    }

    fn pending_info(&self, object: &str) -> Vec<String> {
        let goal = self.goal.object(object).expect("goal object");
        let answered = self.answered.get(object);
        goal.requests
            .iter()
            .filter(|s| !answered.is_some_and(|a| a.contains(*s)))
            .cloned()
            .collect()
    }

    /// Requests outstanding information or moves on.
    fn after_satisfied<R: Rng>(&mut self, rng: &mut R, object: &str) -> DialogueAct {
        let pending = self.pending_info(object);
        if pending.is_empty() {
            return self.next_object(rng);
        }
        for s in &pending {
            if !self.requested_info.insert(format!("{object}#{s}")) {
                // Asked before and still not answered.
                self.agenda.unhelpful += 1;
            }
        }
        DialogueAct::new(ActType::Request, pending.iter().map(|s| SlotFiller::bare(object, s)).collect())
    }

    /// First slot (type order) where `record` violates the goal.
    fn violation(&self, object: &str, record: &Record) -> Option<String> {
        let goal = self.goal.object(object)?;
        let ty = &self.world.object(object).ok()?.ty;
        ty.informable
            .iter()
            .find(|s| {
                let want = &goal.constraints[&s.name];
                want != DONTCARE && record.get(&s.name) != Some(want.as_str())
            })
            .map(|s| s.name.clone())
    }

    /// Tries to change a related constraint of `object` to a value for which
    /// an unseen record exists.
    fn change_goal<R: Rng>(&mut self, rng: &mut R, object: &str) -> Option<DialogueAct> {
        let ty = self.world.object(object).ok()?.ty.clone();
        let goal = self.goal.object(object)?.clone();
        let mut candidates: Vec<&str> = ty
            .informable
            .iter()
            .map(|s| s.name.as_str())
            .filter(|s| self.related(object, s).is_some())
            .collect();
        if candidates.is_empty() {
            candidates = ty
                .informable
                .iter()
                .map(|s| s.name.as_str())
                .filter(|s| goal.constraints[*s] != DONTCARE)
                .collect();
        }
        let slot = candidates.choose(rng)?.to_string();
        let old = goal.constraints[&slot].clone();
        let offered: BTreeSet<&str> = self.offers.get(object).map(|r| r.name.as_str()).into_iter().collect();
        let values: Vec<&String> = ty
            .slot(&slot)?
            .values
            .iter()
            .filter(|v| **v != old)
            .filter(|v| {
                let mut c = goal.constraints.clone();
                c.insert(slot.clone(), (*v).clone());
                self.ontology
                    .kb
                    .records(&ty.name)
                    .iter()
                    .any(|r| record_matches(r, &c) && !offered.contains(r.name.as_str()))
            })
            .collect();
        let new = (*values.choose(rng)?).clone();
        self.goal.object_mut(object)?.constraints.insert(slot.clone(), new.clone());
        // A later object that already referred to this one keeps its own value
        // but no longer shares the slot.
        if self.discussed_after(object) {
            if self.related(object, &slot).is_some() {
                let rel_attr = self.world.relations_of(object).find_map(|rel| {
                    rel.attribute_for(object, &slot).map(|(a, _)| (rel.id.clone(), a.name.clone()))
                });
                if let Some(key) = rel_attr {
                    self.goal.relations.remove(&key);
                }
            }
        }
        self.agenda.goal_changes.push(GoalChange {
            object: object.to_string(),
            slot: slot.clone(),
            old,
            new: new.clone(),
        });
        Some(DialogueAct::new(ActType::Reqalts, vec![SlotFiller::literal(object, &slot, &new)]))
    }

    /// Whether `object` comes after some other object that was already discussed.
    fn discussed_after(&self, object: &str) -> bool {
        let pos = self.goal.objects.iter().position(|g| g.object == object).unwrap_or(0);
        self.goal.objects[..pos].iter().any(|g| self.discussed.contains(&g.object))
    }

    fn record_system_act(&mut self, act: &DialogueAct) {
        for f in &act.fillers {
            if let Some(v) = f.literal_value() {
                if f.slot.slot != NAME_SLOT {
                    self.system_said.insert((f.slot.entity.clone(), f.slot.slot.clone()), v.to_string());
                }
            }
        }
    }

    /// The user's reply to `system_act`.
    pub fn respond<R: Rng>(&mut self, rng: &mut R, system_act: &DialogueAct) -> DialogueAct {
        if self.finished {
            return DialogueAct::bye();
        }
        let repeated = self.last_system_act.as_ref() == Some(system_act);
        self.last_system_act = Some(system_act.clone());
        let unhelpful_before = self.agenda.unhelpful;
        let reply = self.react(rng, system_act);
        self.record_system_act(system_act);
        if repeated && self.agenda.unhelpful == unhelpful_before {
            self.agenda.unhelpful += 1;
        }
        if self.agenda.unhelpful == unhelpful_before {
            self.agenda.unhelpful = 0;
        }
        if self.agenda.unhelpful >= self.config.patience && reply.act_type != ActType::Bye {
            return self.emit(DialogueAct::bye());
        }
        self.emit(reply)
    }

    fn react<R: Rng>(&mut self, rng: &mut R, sa: &DialogueAct) -> DialogueAct {
        if let Some(act) = self.agenda.pop() {
            return act;
        }
        let object = self.current_object().to_string();
        match sa.act_type {
            ActType::Hello if self.discussed.is_empty() => return self.opening_act(rng),
            ActType::Bye => {
                self.finished = true;
                return DialogueAct::bye();
            }
            _ => {}
        }
        // Relation confirmation touching the current object.
        if sa.act_type == ActType::Confirm && sa.has_relation() {
            let f = &sa.fillers[0];
            let Some(FillerValue::Relation(o)) = &f.value else { unreachable!() };
            let (own_slot, other, other_slot) = if f.slot.entity == object {
                (f.slot.slot.clone(), o.entity.clone(), o.slot.clone())
            } else if o.entity == object {
                (o.slot.clone(), f.slot.entity.clone(), f.slot.slot.clone())
            } else {
                self.agenda.unhelpful += 1;
                return self.opening_act(rng);
            };
            let want = self.goal.object(&object).expect("goal").constraints[&own_slot].clone();
            let other_value = self
                .offers
                .get(&other)
                .and_then(|r| r.get(&other_slot).map(str::to_string))
                .or_else(|| self.goal.object(&other).map(|g| g.constraints[&other_slot].clone()));
            return if other_value.as_deref() == Some(want.as_str()) {
                DialogueAct::bare(ActType::Affirm)
            } else {
                DialogueAct::new(ActType::Negate, vec![SlotFiller::literal(&object, &own_slot, &want)])
            };
        }
        let addressed: BTreeSet<&str> = sa.fillers.iter().map(|f| f.slot.entity.as_str()).collect();
        if addressed.is_empty() || !addressed.contains(object.as_str()) || addressed.len() > 1 {
            // Nothing the user can use for the object at hand.
            self.agenda.unhelpful += 1;
            return self.opening_act(rng);
        }
        match sa.act_type {
            ActType::Request => {
                let f = &sa.fillers[0];
                let slot = f.slot.slot.clone();
                if self.goal.object(&object).expect("goal").constraints.contains_key(&slot) {
                    if self.is_conveyed(&object, &slot) {
                        self.agenda.unhelpful += 1;
                    }
                    let filler = self.express(rng, &object, &slot);
                    DialogueAct::new(ActType::Inform, vec![filler])
                } else {
                    self.agenda.unhelpful += 1;
                    self.opening_act(rng)
                }
            }
            ActType::Confirm => {
                let f = &sa.fillers[0];
                let slot = f.slot.slot.clone();
                let Some(want) = self.goal.object(&object).expect("goal").constraints.get(&slot).cloned() else {
                    self.agenda.unhelpful += 1;
                    return self.opening_act(rng);
                };
                if f.literal_value() == Some(want.as_str()) {
                    DialogueAct::bare(ActType::Affirm)
                } else {
                    // The correction is stated like any other constraint.
                    let filler = self.express(rng, &object, &slot);
                    DialogueAct::new(ActType::Negate, vec![filler])
                }
            }
            ActType::Inform => self.react_to_inform(rng, &object, sa),
            _ => {
                self.agenda.unhelpful += 1;
                self.opening_act(rng)
            }
        }
    }

    fn react_to_inform<R: Rng>(&mut self, rng: &mut R, object: &str, sa: &DialogueAct) -> DialogueAct {
        let name = sa
            .fillers
            .iter()
            .find(|f| f.slot.slot == NAME_SLOT)
            .and_then(|f| match &f.value {
                Some(FillerValue::Literal(v)) => Some(v.clone()),
                _ => None,
            });
        let Some(name) = name else {
            self.agenda.unhelpful += 1;
            return self.opening_act(rng);
        };
        let goal = self.goal.object(object).expect("goal").clone();
        if name == NO_MATCH {
            let contradiction = sa.fillers.iter().find_map(|f| {
                let v = match &f.value {
                    Some(FillerValue::Literal(v)) if f.slot.slot != NAME_SLOT => v,
                    _ => return None,
                };
                let want = goal.constraints.get(&f.slot.slot)?;
                (want != DONTCARE && want != v).then(|| f.slot.slot.clone())
            });
            if let Some(slot) = contradiction {
                if self.is_conveyed(object, &slot) {
                    self.agenda.unhelpful += 1;
                }
                // The system's value is about to be recorded as said.
                self.record_system_act(sa);
                let filler = self.express(rng, object, &slot);
                return DialogueAct::new(ActType::Negate, vec![filler]);
            }
            if self.awaiting_alternative.remove(object) {
                if rng.random_bool(self.config.p_goal_change) {
                    if let Some(act) = self.change_goal(rng, object) {
                        return act;
                    }
                }
                if self.offers.contains_key(object) {
                    return self.after_satisfied(rng, object);
                }
            }
            self.agenda.unhelpful += 1;
            return self.opening_act(rng);
        }
        let Some(record) = self
            .world
            .object(object)
            .ok()
            .and_then(|o| self.ontology.kb.record_by_name(&o.ty.name, &name))
            .cloned()
        else {
            self.agenda.unhelpful += 1;
            return self.opening_act(rng);
        };
        let previous = self.offers.insert(object.to_string(), record.clone());
        if previous.as_ref().map(|r| &r.name) != Some(&record.name) {
            self.answered.remove(object);
        }
        for f in &sa.fillers {
            if f.literal_value().is_some() {
                self.answered.entry(object.to_string()).or_default().insert(f.slot.slot.clone());
            }
        }
        if let Some(slot) = self.violation(object, &record) {
            self.awaiting_alternative.remove(object);
            if self.is_conveyed(object, &slot) {
                self.agenda.unhelpful += 1;
            }
            self.record_system_act(sa);
            let filler = self.express(rng, object, &slot);
            return DialogueAct::new(ActType::Negate, vec![filler]);
        }
        self.awaiting_alternative.remove(object);
        if !self.reqalts_done.contains(object) {
            self.reqalts_done.insert(object.to_string());
            if rng.random_bool(self.config.p_reqalts) {
                self.awaiting_alternative.insert(object.to_string());
                return DialogueAct::bare(ActType::Reqalts);
            }
        }
        self.after_satisfied(rng, object)
    }
}
