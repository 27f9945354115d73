//! Fixed-length summary vectors fed to the learners.

use std::collections::BTreeMap;

use crate::belief::{Label, Marginal};
use crate::entities::{ConversationalRelation, ConversationalWorld};
use crate::error::{Error, Result};
use crate::ontology::{query_kb, record_matches, ObjectTypeDef, Ontology};
use crate::tracking::FocusStateResult;

const PER_SLOT: usize = 8;
const GLOBAL: usize = 11;
const PER_ATTR_MASTER: usize = 2;
const PER_ATTR_RELATION: usize = 5;

pub fn object_dim(ty: &ObjectTypeDef) -> usize {
    ty.informable.len() * PER_SLOT + GLOBAL
}

pub fn master_dim(ty: &ObjectTypeDef, relations: &[&ConversationalRelation]) -> usize {
    object_dim(ty) + relations.iter().map(|r| r.attributes.len() * PER_ATTR_MASTER + 1).sum::<usize>()
}

pub fn relation_dim(rel: &ConversationalRelation) -> usize {
    rel.attributes.len() * PER_ATTR_RELATION + 1
}

/// Inputs of every policy of the focus object's stack.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefSummary {
    pub object: Vec<f64>,
    pub master: Vec<f64>,
    pub relations: BTreeMap<String, Vec<f64>>,
}

/// Constraint per slot from the merged belief: the argmax label when it is a
/// proper value or dontcare.
pub fn constraints_from(fs: &FocusStateResult) -> BTreeMap<String, String> {
    fs.merged
        .iter()
        .filter_map(|(slot, m)| match m.argmax().0 {
            Label::Value(v) => Some((slot.clone(), v.clone())),
            Label::DontCare => Some((slot.clone(), crate::ontology::DONTCARE.to_string())),
            _ => None,
        })
        .collect()
}

fn sorted_non_none(m: &Marginal) -> (f64, f64) {
    let mut probs: Vec<f64> = m.iter().skip(1).map(|(_, p)| p).collect();
    probs.sort_by(|a, b| b.total_cmp(a));
    (probs.first().copied().unwrap_or(0.0), probs.get(1).copied().unwrap_or(0.0))
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn object_features(world: &ConversationalWorld, ontology: &Ontology, fs: &FocusStateResult) -> Result<Vec<f64>> {
    let obj = world.object(&fs.object)?;
    let ty = &obj.ty;
    let mut x = Vec::with_capacity(object_dim(ty));
    for slot in &ty.informable {
        let m = &fs.merged[&slot.name];
        let (top, second) = sorted_non_none(m);
        let h = obj.history[&slot.name];
        x.extend([
            top,
            second,
            m.none(),
            m.prob(&Label::DontCare),
            flag(fs.conflicts[&slot.name]),
            flag(h.system_requested),
            flag(h.system_confirmed),
            flag(h.user_informed),
        ]);
    }
    let constraints = constraints_from(fs);
    let count = query_kb(ontology, &ty.name, &constraints)?.len();
    x.extend([
        flag(count == 0),
        flag(count == 1),
        flag((2..=4).contains(&count)),
        flag(count >= 5),
    ]);
    let offered = obj.context.offered.as_ref();
    x.extend([
        flag(offered.is_some()),
        flag(offered.is_some_and(|r| record_matches(r, &constraints))),
        flag(!obj.pending_requests.is_empty()),
        flag(obj.alternatives_requested),
        flag(obj.user_negated),
        flag(fs.conflict),
        1.0,
    ]);
    debug_assert_eq!(x.len(), object_dim(ty));
    Ok(x)
}

pub fn master_features(world: &ConversationalWorld, object_x: &[f64], object: &str) -> Vec<f64> {
    let mut x = object_x.to_vec();
    for rel in world.relations_of(object) {
        for attr in &rel.attributes {
            let m = &rel.user_goal[&attr.name];
            x.extend([m.prob(&Label::Equals), m.none()]);
        }
        x.push(flag(rel.active));
    }
    x
}

pub fn relation_features(rel: &ConversationalRelation, object: &str, fs: &FocusStateResult) -> Vec<f64> {
    let mut x = Vec::with_capacity(relation_dim(rel));
    for attr in &rel.attributes {
        let m = &rel.user_goal[&attr.name];
        let (own, _) = rel.slots_for(object, attr);
        let top = fs.merged.get(&own).map(|b| sorted_non_none(b).0).unwrap_or(0.0);
        x.extend([
            m.prob(&Label::Equals),
            m.none(),
            flag(fs.conflicts.get(&own).copied().unwrap_or(false)),
            top,
            flag(rel.history.get(&attr.name).is_some_and(|h| h.system_confirmed)),
        ]);
    }
    x.push(1.0);
    x
}

pub fn summarize(world: &ConversationalWorld, ontology: &Ontology, fs: &FocusStateResult) -> Result<BeliefSummary> {
    if fs.object.is_empty() {
        return Err(Error::EmptyFocus);
    }
    let object = object_features(world, ontology, fs)?;
    let master = master_features(world, &object, &fs.object);
    let relations = world
        .relations_of(&fs.object)
        .map(|r| (r.id.clone(), relation_features(r, &fs.object, fs)))
        .collect();
    Ok(BeliefSummary {
        object,
        master,
        relations,
    })
}
