//! Conversational objects, relations and the world they live in.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::acts::{DialogueAct, EntityDirectory};
use crate::belief::Marginal;
use crate::error::{Error, Result};
use crate::ontology::{derive_relations, ObjectTypeDef, Record, RelationAttributeDef};

/// Per-slot dialogue history of an object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SlotHistory {
    pub system_requested: bool,
    pub system_confirmed: bool,
    pub user_informed: bool,
}

/// What the system has shared about an object: its most recent offer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextState {
    pub offered: Option<Record>,
}

impl ContextState {
    pub fn is_empty(&self) -> bool {
        self.offered.is_none()
    }

    pub fn value(&self, slot: &str) -> Option<&str> {
        self.offered.as_ref().and_then(|r| r.get(slot))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationFact {
    Equals,
    NotEquals,
}

/// Relation facts derived from the offers of both endpoints, per attribute.
/// Empty whenever either endpoint has no offer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationContext {
    pub facts: BTreeMap<String, RelationFact>,
}

impl RelationContext {
    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ConversationalObject {
    pub id: String,
    pub ty: Arc<ObjectTypeDef>,
    pub user_goal: BTreeMap<String, Marginal>,
    pub context: ContextState,
    pub history: BTreeMap<String, SlotHistory>,
    pub last_user_act: Option<DialogueAct>,
    /// Slots the user asked about in the latest turn and that are still unanswered.
    pub pending_requests: BTreeSet<String>,
    /// The user asked for an alternative in the latest turn.
    pub alternatives_requested: bool,
    /// The latest user turn rejected something (negate).
    pub user_negated: bool,
    /// Names offered so far, oldest first.
    pub offered_names: Vec<String>,
}

impl ConversationalObject {
    pub fn new(id: &str, ty: Arc<ObjectTypeDef>) -> Self {
        let user_goal = ty
            .informable
            .iter()
            .map(|s| (s.name.clone(), Marginal::fresh(Marginal::slot_domain(&s.values))))
            .collect();
        let history = ty.informable.iter().map(|s| (s.name.clone(), SlotHistory::default())).collect();
        ConversationalObject {
            id: id.to_string(),
            ty,
            user_goal,
            context: ContextState::default(),
            history,
            last_user_act: None,
            pending_requests: BTreeSet::new(),
            alternatives_requested: false,
            user_negated: false,
            offered_names: Vec::new(),
        }
    }

    pub fn belief(&self, slot: &str) -> Option<&Marginal> {
        self.user_goal.get(slot)
    }

    /// Whether the user has said anything about this object yet.
    pub fn discussed(&self) -> bool {
        self.last_user_act.is_some()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RelationHistory {
    pub system_confirmed: bool,
    pub user_addressed: bool,
}

#[derive(Clone, Debug)]
pub struct ConversationalRelation {
    pub id: String,
    /// Canonical (sorted) endpoint ids; attribute `slot_a` belongs to `.0`.
    pub endpoints: (String, String),
    pub attributes: Vec<RelationAttributeDef>,
    pub user_goal: BTreeMap<String, Marginal>,
    pub context: RelationContext,
    pub history: BTreeMap<String, RelationHistory>,
    /// Set once the user has addressed the relation; only active relations
    /// are visible to the master policy.
    pub active: bool,
    pub last_user_act: Option<DialogueAct>,
}

impl ConversationalRelation {
    pub fn other_endpoint(&self, object: &str) -> Option<&str> {
        if self.endpoints.0 == object {
            Some(&self.endpoints.1)
        } else if self.endpoints.1 == object {
            Some(&self.endpoints.0)
        } else {
            None
        }
    }

    /// Attribute connecting `object`'s `slot` to the other endpoint, with the
    /// other endpoint's slot.
    pub fn attribute_for(&self, object: &str, slot: &str) -> Option<(&RelationAttributeDef, &str)> {
        self.attributes.iter().find_map(|a| {
            if self.endpoints.0 == object && a.slot_a == slot {
                Some((a, a.slot_b.as_str()))
            } else if self.endpoints.1 == object && a.slot_b == slot {
                Some((a, a.slot_a.as_str()))
            } else {
                None
            }
        })
    }

    /// `(own slot, other slot)` of `object` for attribute `attr`.
    pub fn slots_for(&self, object: &str, attr: &RelationAttributeDef) -> (String, String) {
        if self.endpoints.0 == object {
            (attr.slot_a.clone(), attr.slot_b.clone())
        } else {
            (attr.slot_b.clone(), attr.slot_a.clone())
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&RelationAttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn equals_prob(&self, attr: &str) -> f64 {
        self.user_goal
            .get(attr)
            .map(|m| m.prob(&crate::belief::Label::Equals))
            .unwrap_or(0.0)
    }
}

/// World-level state: greeting and closing flags as probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WorldBelief {
    pub greeted: f64,
    pub closing: f64,
}

impl WorldBelief {
    pub fn is_greeted(&self) -> bool {
        self.greeted > 0.5
    }

    pub fn is_closing(&self) -> bool {
        self.closing > 0.5
    }
}

#[derive(Clone, Debug)]
pub struct ConversationalWorld {
    pub objects: Vec<ConversationalObject>,
    pub relations: Vec<ConversationalRelation>,
    pub world_belief: WorldBelief,
    focus: BTreeSet<String>,
}

pub fn relation_id(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}-{b}")
    } else {
        format!("{b}-{a}")
    }
}

/// Creates a world with fresh beliefs and one relation for every object pair
/// sharing at least one concept.
pub fn new_world(types: &[(String, Arc<ObjectTypeDef>)]) -> Result<ConversationalWorld> {
    let mut seen = BTreeSet::new();
    for (id, _) in types {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateEntity(id.clone()));
        }
    }
    let objects: Vec<_> = types.iter().map(|(id, ty)| ConversationalObject::new(id, ty.clone())).collect();
    let mut relations = Vec::new();
    for i in 0..types.len() {
        for j in (i + 1)..types.len() {
            let (mut a, mut b) = (&types[i], &types[j]);
            if a.0 > b.0 {
                std::mem::swap(&mut a, &mut b);
            }
            let attributes = derive_relations(&a.1, &b.1);
            if attributes.is_empty() {
                continue;
            }
            let user_goal = attributes
                .iter()
                .map(|attr| (attr.name.clone(), Marginal::fresh(Marginal::relation_domain())))
                .collect();
            let history = attributes.iter().map(|attr| (attr.name.clone(), RelationHistory::default())).collect();
            relations.push(ConversationalRelation {
                id: relation_id(&a.0, &b.0),
                endpoints: (a.0.clone(), b.0.clone()),
                attributes,
                user_goal,
                context: RelationContext::default(),
                history,
                active: false,
                last_user_act: None,
            });
        }
    }
    Ok(ConversationalWorld {
        objects,
        relations,
        world_belief: WorldBelief::default(),
        focus: BTreeSet::new(),
    })
}

/// Replaces the object's context with the new offer.
pub fn update_context(obj: &ConversationalObject, offered: &Record, record_type: &str) -> Result<ContextState> {
    if record_type != obj.ty.name {
        return Err(Error::TypeMismatch {
            record: offered.name.clone(),
            expected: obj.ty.name.clone(),
            actual: record_type.to_string(),
        });
    }
    Ok(ContextState {
        offered: Some(offered.clone()),
    })
}

/// Relation context as a function of both endpoint contexts.
pub fn update_relation_context(rel: &ConversationalRelation, a: &ContextState, b: &ContextState) -> RelationContext {
    let (Some(ra), Some(rb)) = (&a.offered, &b.offered) else {
        return RelationContext::default();
    };
    let facts = rel
        .attributes
        .iter()
        .map(|attr| {
            let fact = match (ra.get(&attr.slot_a), rb.get(&attr.slot_b)) {
                (Some(x), Some(y)) if x == y => RelationFact::Equals,
                _ => RelationFact::NotEquals,
            };
            (attr.name.clone(), fact)
        })
        .collect();
    RelationContext { facts }
}

impl ConversationalWorld {
    pub fn object(&self, id: &str) -> Result<&ConversationalObject> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn object_mut(&mut self, id: &str) -> Result<&mut ConversationalObject> {
        self.objects
            .iter_mut()
            .find(|o| o.id == id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn relation(&self, id: &str) -> Result<&ConversationalRelation> {
        self.relations
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn relation_mut(&mut self, id: &str) -> Result<&mut ConversationalRelation> {
        self.relations
            .iter_mut()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn relations_of<'a>(&'a self, object: &'a str) -> impl Iterator<Item = &'a ConversationalRelation> + 'a {
        self.relations.iter().filter(move |r| r.other_endpoint(object).is_some())
    }

    pub fn active_relations_of<'a>(&'a self, object: &'a str) -> impl Iterator<Item = &'a ConversationalRelation> + 'a {
        self.relations_of(object).filter(|r| r.active)
    }

    pub fn has_entity(&self, id: &str) -> bool {
        self.objects.iter().any(|o| o.id == id) || self.relations.iter().any(|r| r.id == id)
    }

    pub fn set_focus<I, S>(&mut self, ids: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        if let Some(bad) = ids.iter().find(|id| !self.has_entity(id)) {
            return Err(Error::UnknownEntity(bad.clone()));
        }
        self.focus = ids;
        Ok(())
    }

    pub fn current_focus(&self) -> &BTreeSet<String> {
        &self.focus
    }

    /// The focused object, if the focus holds one.
    pub fn focus_object(&self) -> Option<&str> {
        self.focus
            .iter()
            .find(|id| self.objects.iter().any(|o| &o.id == *id))
            .map(String::as_str)
    }

    /// Records an offer on `object` and refreshes every incident relation context.
    pub fn offer(&mut self, object: &str, record: &Record) -> Result<()> {
        let obj = self.object(object)?;
        let ty = obj.ty.name.clone();
        let context = update_context(obj, record, &ty)?;
        let obj = self.object_mut(object)?;
        obj.context = context;
        if !obj.offered_names.contains(&record.name) {
            obj.offered_names.push(record.name.clone());
        }
        self.refresh_relation_contexts();
        Ok(())
    }

    pub fn refresh_relation_contexts(&mut self) {
        for i in 0..self.relations.len() {
            let rel = &self.relations[i];
            let a = self.object(&rel.endpoints.0).map(|o| o.context.clone()).unwrap_or_default();
            let b = self.object(&rel.endpoints.1).map(|o| o.context.clone()).unwrap_or_default();
            let ctx = update_relation_context(rel, &a, &b);
            self.relations[i].context = ctx;
        }
    }

    /// Text dump of every entity's state, beliefs at four decimals.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let focus: Vec<_> = self.focus.iter().cloned().collect();
        let _ = writeln!(
            out,
            "world greeted={:.4} closing={:.4} focus={{{}}}",
            self.world_belief.greeted,
            self.world_belief.closing,
            focus.join(",")
        );
        for o in &self.objects {
            let offered = o.context.offered.as_ref().map(|r| r.name.as_str()).unwrap_or("-");
            let _ = writeln!(out, "object {} type={} offered={offered}", o.id, o.ty.name);
            for (slot, m) in &o.user_goal {
                let _ = writeln!(out, "  {slot} {}", m.snapshot());
            }
        }
        for r in &self.relations {
            let _ = writeln!(out, "relation {} active={}", r.id, r.active);
            for (attr, m) in &r.user_goal {
                let ctx = match r.context.facts.get(attr) {
                    Some(RelationFact::Equals) => "equals",
                    Some(RelationFact::NotEquals) => "not-equals",
                    None => "-",
                };
                let _ = writeln!(out, "  {attr} {} context={ctx}", m.snapshot());
            }
        }
        out
    }
}

impl EntityDirectory for ConversationalWorld {
    fn has_object(&self, id: &str) -> bool {
        self.objects.iter().any(|o| o.id == id)
    }

    fn relation_between(&self, a: &str, b: &str) -> Option<String> {
        let id = relation_id(a, b);
        self.relations.iter().any(|r| r.id == id).then_some(id)
    }
}
