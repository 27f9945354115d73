//! Rule-based belief tracking and focus-state merging.
//!
//! Every user turn is routed to the entity its top hypothesis addresses.
//! Per slot, confidences of all hypotheses carrying a value are summed and
//! folded into the prior with the focus rule
//! `b'(v) = e(v) + (1 - sum(e)) * b(v)`; rejected values then lose a share of
//! their mass to NONE.

use std::collections::BTreeMap;

use crate::acts::{addressed_entity_of, ActType, Addressee, DialogueAct, FillerValue, Observation};
use crate::belief::{Label, Marginal, NORMALIZATION_TOLERANCE};
use crate::entities::{relation_id, ConversationalWorld};
use crate::error::{Error, Result};
use crate::ontology::{Ontology, NAME_SLOT};

/// Threshold both tops must exceed for a slot conflict.
pub const CONFLICT_THRESHOLD: f64 = 0.5;
/// Aggregated confidence at which a request or reqalts counts as made.
pub const FLAG_THRESHOLD: f64 = 0.5;

/// Which dialogue model the tracker implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BeliefModel {
    /// Objects and relations, with merging.
    Cedm,
    /// Objects only; relation-valued fillers carry no evidence.
    Mddm,
}

pub fn focus_rule_update(prior: &Marginal, evidence: &BTreeMap<Label, f64>) -> Result<Marginal> {
    let mut total = 0.0;
    for (label, c) in evidence {
        if !(*c >= 0.0) {
            return Err(Error::InvalidEvidence(format!("negative confidence {c} for `{label}`")));
        }
        total += c;
    }
    if total > 1.0 + NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidEvidence(format!("evidence sums to {total}")));
    }
    let total = total.min(1.0);
    let mut out = prior.clone();
    for p in out.probs_mut() {
        *p *= 1.0 - total;
    }
    for (label, c) in evidence {
        let i = out.index_of(label)?;
        out.probs_mut()[i] += c;
    }
    Ok(out)
}

pub fn apply_rejection_discount(prior: &Marginal, rejected: &Label, confidence: f64) -> Result<Marginal> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::InvalidEvidence(format!("rejection confidence {confidence} outside [0, 1]")));
    }
    let mut out = prior.clone();
    let i = out.index_of(rejected)?;
    if i == 0 {
        return Ok(out);
    }
    let moved = out.probs()[i] * confidence;
    out.probs_mut()[i] -= moved;
    out.probs_mut()[0] += moved;
    Ok(out)
}

fn check_normalized(m: &Marginal, what: &str) -> Result<()> {
    if m.is_normalized() {
        Ok(())
    } else {
        Err(Error::Unnormalized(what.to_string()))
    }
}

/// The related object's slot belief weighted by the relation belief (b̃).
///
/// A non-empty context value of the related object replaces its belief by a
/// point mass.
pub fn weighted_relation_belief(rel: &Marginal, other: &Marginal, other_context: Option<&str>) -> Result<Marginal> {
    check_normalized(rel, "relation")?;
    check_normalized(other, "related object")?;
    let base = match other_context {
        Some(v) => Marginal::degenerate(other.domain(), &Label::value(v))?,
        None => other.clone(),
    };
    let eq = rel.prob(&Label::Equals);
    let none = rel.none();
    let mut out = base;
    for p in out.probs_mut() {
        *p *= eq;
    }
    out.probs_mut()[0] += none;
    Ok(out)
}

/// Merged focus-object beliefs with conflict bits.
#[derive(Clone, Debug, PartialEq)]
pub struct FocusStateResult {
    pub object: String,
    pub merged: BTreeMap<String, Marginal>,
    pub conflicts: BTreeMap<String, bool>,
    pub conflict: bool,
    /// Per slot, `(entity id, w)` for the object itself followed by each contribution.
    pub weights: BTreeMap<String, Vec<(String, f64)>>,
}

impl FocusStateResult {
    pub fn slot(&self, slot: &str) -> Option<&Marginal> {
        self.merged.get(slot)
    }
}

/// Merges one slot: `b̂(v) = Σ w_i b_i(v) / Σ w_i` with `w_i = 1 - b_i(NONE)`.
/// Returns the merged marginal, the conflict bit and the weights.
pub fn merge_slot(own: &Marginal, contributions: &[Marginal]) -> (Marginal, bool, Vec<f64>) {
    let mut weights = Vec::with_capacity(contributions.len() + 1);
    let mut acc = vec![0.0; own.labels().len()];
    let mut total = 0.0;
    for b in std::iter::once(own).chain(contributions) {
        let w = (1.0 - b.none()).max(0.0);
        weights.push(w);
        if w == 0.0 {
            continue;
        }
        total += w;
        for (label, p) in b.iter() {
            // Domains share labels; look up by label in case orders ever differ.
            if let Ok(i) = own.index_of(label) {
                acc[i] += w * p;
            }
        }
    }
    let merged = if total == 0.0 {
        Marginal::fresh(own.domain())
    } else {
        let pairs: Vec<(Label, f64)> = own.labels().iter().cloned().zip(acc.iter().map(|a| a / total)).collect();
        Marginal::from_pairs(own.domain(), &pairs).expect("labels come from the same domain")
    };
    let conflict = match own.top_non_none() {
        Some((top, p)) if p > CONFLICT_THRESHOLD => contributions.iter().any(|c| {
            matches!(c.top_non_none(), Some((ct, cp)) if cp > CONFLICT_THRESHOLD && ct != top)
        }),
        _ => false,
    };
    (merged, conflict, weights)
}

/// Merges every slot of `own` with its per-slot contributions.
pub fn merge_focus_state(
    object: &str,
    own: &BTreeMap<String, Marginal>,
    contributions: &BTreeMap<String, Vec<(String, Marginal)>>,
) -> FocusStateResult {
    let mut merged = BTreeMap::new();
    let mut conflicts = BTreeMap::new();
    let mut weights = BTreeMap::new();
    for (slot, b) in own {
        let contrib = contributions.get(slot).map(Vec::as_slice).unwrap_or(&[]);
        let marginals: Vec<Marginal> = contrib.iter().map(|(_, m)| m.clone()).collect();
        let (m, c, w) = merge_slot(b, &marginals);
        let ids = std::iter::once(object.to_string()).chain(contrib.iter().map(|(id, _)| id.clone()));
        weights.insert(slot.clone(), ids.zip(w).collect());
        merged.insert(slot.clone(), m);
        conflicts.insert(slot.clone(), c);
    }
    let conflict = conflicts.values().any(|c| *c);
    FocusStateResult {
        object: object.to_string(),
        merged,
        conflicts,
        conflict,
        weights,
    }
}

/// Focus state of `object` in `world`. Under [`BeliefModel::Mddm`] the object's
/// own belief is returned unchanged.
pub fn focus_state(world: &ConversationalWorld, object: &str, model: BeliefModel) -> Result<FocusStateResult> {
    let obj = world.object(object)?;
    let mut contributions: BTreeMap<String, Vec<(String, Marginal)>> = BTreeMap::new();
    if model == BeliefModel::Cedm {
        for rel in world.relations_of(object) {
            let other_id = rel.other_endpoint(object).expect("incident relation");
            let other = world.object(other_id)?;
            for slot in obj.user_goal.keys() {
                let Some((attr, other_slot)) = rel.attribute_for(object, slot) else { continue };
                let rel_belief = &rel.user_goal[&attr.name];
                let other_belief = &other.user_goal[other_slot];
                let b = weighted_relation_belief(rel_belief, other_belief, other.context.value(other_slot))?;
                contributions.entry(slot.clone()).or_default().push((other_id.to_string(), b));
            }
        }
    }
    Ok(merge_focus_state(object, &obj.user_goal, &contributions))
}

/// Applies a system act to the state: offers update context, requests and
/// confirms are recorded in the history, answered requests are cleared.
pub fn apply_system_act(world: &mut ConversationalWorld, ontology: &Ontology, act: &DialogueAct) -> Result<()> {
    let addressee = match addressed_entity_of(act, world) {
        Ok(a) => a,
        Err(_) => return Ok(()),
    };
    match addressee {
        Addressee::World | Addressee::Focus => {}
        Addressee::Relation { id, .. } => {
            if act.act_type == ActType::Confirm {
                let rel = world.relation_mut(&id)?;
                for f in &act.fillers {
                    if let Some(FillerValue::Relation(other)) = &f.value {
                        let attr = rel
                            .attribute_for(&f.slot.entity, &f.slot.slot)
                            .filter(|(_, s)| *s == other.slot)
                            .map(|(a, _)| a.name.clone());
                        if let Some(attr) = attr {
                            rel.history.entry(attr).or_default().system_confirmed = true;
                        }
                    }
                }
            }
        }
        Addressee::Object(id) => {
            let ty_name = world.object(&id)?.ty.name.clone();
            match act.act_type {
                ActType::Request => {
                    let obj = world.object_mut(&id)?;
                    for f in &act.fillers {
                        if let Some(h) = obj.history.get_mut(&f.slot.slot) {
                            h.system_requested = true;
                        }
                    }
                }
                ActType::Confirm => {
                    let obj = world.object_mut(&id)?;
                    for f in &act.fillers {
                        if let Some(h) = obj.history.get_mut(&f.slot.slot) {
                            h.system_confirmed = true;
                        }
                    }
                }
                ActType::Inform => {
                    let name = act
                        .fillers
                        .iter()
                        .find(|f| f.slot.slot == NAME_SLOT)
                        .and_then(|f| f.literal_value());
                    if let Some(name) = name {
                        if let Some(record) = ontology.kb.record_by_name(&ty_name, name) {
                            let record = record.clone();
                            world.offer(&id, &record)?;
                        }
                    }
                    let obj = world.object_mut(&id)?;
                    for f in &act.fillers {
                        if f.literal_value().is_some() {
                            obj.pending_requests.remove(&f.slot.slot);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(())
}

#[derive(Default)]
struct TurnEvidence {
    values: BTreeMap<String, BTreeMap<Label, f64>>,
    rejections: BTreeMap<String, BTreeMap<Label, f64>>,
    /// Relation id -> attribute -> evidence for EQUALS.
    rel_equals: BTreeMap<(String, String), f64>,
    rel_reject: BTreeMap<(String, String), f64>,
    requests: BTreeMap<String, f64>,
    reqalts: f64,
    negate: f64,
}

/// Relation attribute `(relation id, attribute)` named by a relation filler.
fn relation_attr(world: &ConversationalWorld, entity: &str, slot: &str, other: &str, other_slot: &str) -> Option<(String, String)> {
    let rel = world.relation(&relation_id(entity, other)).ok()?;
    let (attr, s) = rel.attribute_for(entity, slot)?;
    (s == other_slot).then(|| (rel.id.clone(), attr.name.clone()))
}

fn confirmed_relation(world: &ConversationalWorld, system_act: &DialogueAct) -> Option<(String, String)> {
    if system_act.act_type != ActType::Confirm {
        return None;
    }
    system_act.fillers.iter().find_map(|f| match &f.value {
        Some(FillerValue::Relation(o)) => relation_attr(world, &f.slot.entity, &f.slot.slot, &o.entity, &o.slot),
        _ => None,
    })
}

fn add(map: &mut BTreeMap<Label, f64>, label: Label, c: f64) {
    *map.entry(label).or_insert(0.0) += c;
}

/// Updates `object` and its relations from the hypotheses addressed to it.
/// Content-free hypotheses (`reqalts()`, `affirm()`, ...) are accepted as
/// addressing the object.
pub fn track_entity(
    world: &mut ConversationalWorld,
    object: &str,
    system_act: &DialogueAct,
    observation: &Observation,
    model: BeliefModel,
) -> Result<()> {
    let obj = world.object(object)?;
    let ty = obj.ty.clone();
    let mut ev = TurnEvidence::default();
    let mut addressed_top = None;

    for (k, (act, c)) in observation.hypotheses().iter().enumerate() {
        let c = *c;
        match addressed_entity_of(act, world)? {
            Addressee::World => continue,
            Addressee::Focus => {}
            Addressee::Object(id) | Addressee::Relation { object: id, .. } if id == object => {}
            Addressee::Object(id) | Addressee::Relation { object: id, .. } => {
                return Err(Error::MisroutedObservation {
                    expected: object.to_string(),
                    actual: id,
                });
            }
        }
        if k == 0 {
            addressed_top = Some(act.clone());
        }
        // Last filler per slot within one hypothesis wins.
        let mut values: BTreeMap<&str, Label> = BTreeMap::new();
        let mut negated: BTreeMap<&str, Label> = BTreeMap::new();
        let mut rels: BTreeMap<(String, String), ()> = BTreeMap::new();
        if act.act_type == ActType::Request || act.act_type == ActType::Confirm {
            for f in &act.fillers {
                if ty.is_requestable(&f.slot.slot) {
                    *ev.requests.entry(f.slot.slot.clone()).or_insert(0.0) += c;
                }
            }
        } else {
            for f in &act.fillers {
                let slot = f.slot.slot.as_str();
                if !ty.is_informable(slot) {
                    continue;
                }
                match &f.value {
                    Some(FillerValue::Literal(v)) => {
                        values.insert(slot, Label::value(v));
                    }
                    Some(FillerValue::Dontcare) => {
                        values.insert(slot, Label::DontCare);
                    }
                    Some(FillerValue::Negated(v)) => {
                        negated.insert(slot, Label::value(v));
                    }
                    Some(FillerValue::Relation(o)) => {
                        if model == BeliefModel::Cedm {
                            if let Some(key) = relation_attr(world, object, slot, &o.entity, &o.slot) {
                                rels.insert(key, ());
                            }
                        }
                    }
                    None => {}
                }
            }
        }
        match act.act_type {
            ActType::Affirm => {
                if let Some(key) = confirmed_relation(world, system_act) {
                    if model == BeliefModel::Cedm {
                        rels.insert(key, ());
                    }
                } else if system_act.act_type == ActType::Confirm {
                    for f in &system_act.fillers {
                        if f.slot.entity == object && ty.is_informable(&f.slot.slot) {
                            if let Some(v) = f.literal_value() {
                                values.entry(f.slot.slot.as_str()).or_insert_with(|| Label::value(v));
                            }
                        }
                    }
                }
            }
            ActType::Negate => {
                ev.negate += c;
                if let Some(key) = confirmed_relation(world, system_act) {
                    *ev.rel_reject.entry(key).or_insert(0.0) += c;
                }
                // Reject what the system last said about each slot unless the user restates it.
                if matches!(system_act.act_type, ActType::Confirm | ActType::Inform) {
                    for f in &system_act.fillers {
                        if f.slot.entity != object || !ty.is_informable(&f.slot.slot) {
                            continue;
                        }
                        let Some(v) = f.literal_value() else { continue };
                        let said = Label::value(v);
                        let slot = f.slot.slot.as_str();
                        let restated = values.get(slot);
                        let reject = match restated {
                            Some(l) => *l != said,
                            None => system_act.act_type == ActType::Confirm && act.fillers.is_empty(),
                        };
                        if reject {
                            negated.entry(slot).or_insert(said);
                        }
                    }
                }
            }
            ActType::Reqalts => ev.reqalts += c,
            _ => {}
        }
        for (slot, label) in values {
            add(ev.values.entry(slot.to_string()).or_default(), label, c);
        }
        for (slot, label) in negated {
            add(ev.rejections.entry(slot.to_string()).or_default(), label, c);
        }
        for (key, ()) in rels {
            *ev.rel_equals.entry(key).or_insert(0.0) += c;
        }
    }

    let obj = world.object_mut(object)?;
    for (slot, evidence) in &ev.values {
        let prior = &obj.user_goal[slot];
        let updated = focus_rule_update(prior, evidence)?;
        obj.user_goal.insert(slot.clone(), updated);
        if let Some(h) = obj.history.get_mut(slot) {
            h.user_informed = true;
        }
    }
    for (slot, rejected) in &ev.rejections {
        for (label, c) in rejected {
            let prior = &obj.user_goal[slot];
            let updated = apply_rejection_discount(prior, label, c.min(1.0))?;
            obj.user_goal.insert(slot.clone(), updated);
        }
    }
    if let Some(top) = addressed_top {
        obj.pending_requests = ev
            .requests
            .iter()
            .filter(|(_, c)| **c >= FLAG_THRESHOLD)
            .map(|(s, _)| s.clone())
            .collect();
        obj.alternatives_requested = ev.reqalts >= FLAG_THRESHOLD;
        obj.user_negated = ev.negate >= FLAG_THRESHOLD;
        obj.last_user_act = Some(top);
    }

    for ((rel_id, attr), c) in &ev.rel_equals {
        let rel = world.relation_mut(rel_id)?;
        let prior = &rel.user_goal[attr];
        let updated = focus_rule_update(prior, &BTreeMap::from([(Label::Equals, c.min(1.0))]))?;
        rel.user_goal.insert(attr.clone(), updated);
        rel.history.entry(attr.clone()).or_default().user_addressed = true;
        // The relation fills the slot as far as the user is concerned.
        let (own, _) = rel.slots_for(object, rel.attribute(attr).expect("known attribute"));
        if let Some(h) = world.object_mut(object)?.history.get_mut(&own) {
            h.user_informed = true;
        }
    }
    for ((rel_id, attr), c) in &ev.rel_reject {
        let rel = world.relation_mut(rel_id)?;
        let prior = &rel.user_goal[attr];
        let updated = apply_rejection_discount(prior, &Label::Equals, c.min(1.0))?;
        rel.user_goal.insert(attr.clone(), updated);
    }
    Ok(())
}

/// World-level update: greeting and closing.
pub fn track_world(world: &mut ConversationalWorld, observation: &Observation) {
    let mut hello = 0.0;
    let mut bye = 0.0;
    for (act, c) in observation.hypotheses() {
        match act.act_type {
            ActType::Hello => hello += c,
            ActType::Bye => bye += c,
            _ => {}
        }
    }
    let wb = &mut world.world_belief;
    wb.greeted = hello.min(1.0) + (1.0 - hello.min(1.0)) * wb.greeted;
    wb.closing = bye.min(1.0) + (1.0 - bye.min(1.0)) * wb.closing;
}

/// Full user-turn update: world belief, routing to the addressed object,
/// entity tracking and focus.
pub fn track_turn(
    world: &mut ConversationalWorld,
    system_act: &DialogueAct,
    observation: &Observation,
    model: BeliefModel,
) -> Result<()> {
    track_world(world, observation);
    let top = observation.top().map(|a| addressed_entity_of(a, world)).transpose()?;
    let focus_before = world.focus_object().map(str::to_string);
    let target = match &top {
        Some(Addressee::Object(o)) => Some(o.clone()),
        Some(Addressee::Relation { object, .. }) => Some(object.clone()),
        Some(Addressee::Focus) => focus_before.clone(),
        Some(Addressee::World) | None => None,
    };
    if let Some(target) = &target {
        // Hypotheses about other objects than the top one are dropped.
        let mut kept = Vec::new();
        for (act, c) in observation.hypotheses() {
            let keep = match addressed_entity_of(act, world)? {
                Addressee::Focus => true,
                Addressee::Object(o) | Addressee::Relation { object: o, .. } => &o == target,
                Addressee::World => false,
            };
            if keep {
                kept.push((act.clone(), *c));
            }
        }
        // The top hypothesis is always kept, so order and bounds carry over.
        let routed = Observation::new(kept)?;
        track_entity(world, target, system_act, &routed, model)?;
        world.set_focus([target.clone()])?;
    }
    if let Some(Addressee::Relation { id, .. }) = &top {
        if model == BeliefModel::Cedm {
            world.relation_mut(id)?.active = true;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn area_domain() -> std::sync::Arc<[Label]> {
        Marginal::slot_domain(&["north".into(), "west".into()])
    }

    fn m(pairs: &[(Label, f64)]) -> Marginal {
        Marginal::from_pairs(area_domain(), pairs).unwrap()
    }

    fn v(s: &str) -> Label {
        Label::value(s)
    }

    #[test]
    fn focus_rule_on_fresh_slot() {
        let prior = Marginal::fresh(area_domain());
        let out = focus_rule_update(&prior, &BTreeMap::from([(v("north"), 0.8)])).unwrap();
        assert!((out.prob(&v("north")) - 0.8).abs() < 1e-12);
        assert!((out.none() - 0.2).abs() < 1e-12);
        assert_eq!(focus_rule_update(&prior, &BTreeMap::new()).unwrap(), prior);
        let sure = focus_rule_update(&out, &BTreeMap::from([(v("north"), 1.0)])).unwrap();
        assert_eq!(sure.prob(&v("north")), 1.0);
        assert_eq!(sure.none(), 0.0);
    }

    #[test]
    fn focus_rule_rejects_bad_evidence() {
        let prior = Marginal::fresh(area_domain());
        assert!(focus_rule_update(&prior, &BTreeMap::from([(v("north"), -0.1)])).is_err());
        assert!(focus_rule_update(&prior, &BTreeMap::from([(v("north"), 0.7), (v("west"), 0.5)])).is_err());
    }

    #[test]
    fn rejection_discount_moves_mass_to_none() {
        let b = m(&[(v("west"), 0.6), (v("north"), 0.3), (Label::None, 0.1)]);
        let out = apply_rejection_discount(&b, &v("west"), 0.5).unwrap();
        assert!((out.prob(&v("west")) - 0.3).abs() < 1e-12);
        assert!((out.prob(&v("north")) - 0.3).abs() < 1e-12);
        assert!((out.none() - 0.4).abs() < 1e-12);
        let b = m(&[(v("west"), 0.9), (Label::None, 0.1)]);
        let out = apply_rejection_discount(&b, &v("west"), 1.0).unwrap();
        assert_eq!(out.prob(&v("west")), 0.0);
        assert!((out.none() - 1.0).abs() < 1e-12);
        assert_eq!(apply_rejection_discount(&b, &v("west"), 0.0).unwrap(), b);
        assert!(apply_rejection_discount(&b, &v("south"), 0.5).is_err());
    }

    #[test]
    fn weighted_relation_belief_cases() {
        let rel = Marginal::from_pairs(Marginal::relation_domain(), &[(Label::None, 0.1), (Label::Equals, 0.9)]).unwrap();
        let other = m(&[(Label::None, 0.2), (v("west"), 0.8)]);
        let bt = weighted_relation_belief(&rel, &other, None).unwrap();
        assert!((bt.none() - 0.28).abs() < 1e-12);
        assert_eq!(bt.prob(&v("north")), 0.0);
        assert!((bt.prob(&v("west")) - 0.72).abs() < 1e-12);

        let absent = Marginal::fresh(Marginal::relation_domain());
        let bt = weighted_relation_belief(&absent, &other, None).unwrap();
        assert_eq!(bt.none(), 1.0);

        let sure = Marginal::degenerate(Marginal::relation_domain(), &Label::Equals).unwrap();
        let bt = weighted_relation_belief(&sure, &other, Some("west")).unwrap();
        assert_eq!(bt.prob(&v("west")), 1.0);

        let bad = Marginal::from_pairs(Marginal::relation_domain(), &[(Label::Equals, 0.5)]).unwrap();
        assert!(matches!(weighted_relation_belief(&bad, &other, None), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn merge_worked_example() {
        let own = m(&[(Label::None, 0.3), (v("north"), 0.7)]);
        let bt = m(&[(Label::None, 0.28), (v("west"), 0.72)]);
        let (merged, conflict, w) = merge_slot(&own, &[bt]);
        assert!((merged.none() - (0.7 * 0.3 + 0.72 * 0.28) / 1.42).abs() < 1e-12);
        assert!((merged.prob(&v("north")) - 0.49 / 1.42).abs() < 1e-12);
        assert!((merged.prob(&v("west")) - 0.5184 / 1.42).abs() < 1e-12);
        assert!(conflict);
        assert!((w[0] - 0.7).abs() < 1e-12 && (w[1] - 0.72).abs() < 1e-12);
    }

    #[test]
    fn merge_edge_cases() {
        let own = m(&[(Label::None, 0.3), (v("north"), 0.7)]);
        let (merged, conflict, _) = merge_slot(&own, &[]);
        assert_eq!(merged, own);
        assert!(!conflict);
        let fresh = Marginal::fresh(area_domain());
        let (merged, conflict, _) = merge_slot(&fresh, &[fresh.clone()]);
        assert_eq!(merged, fresh);
        assert!(!conflict);
    }
}
