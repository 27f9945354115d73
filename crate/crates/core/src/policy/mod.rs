//! Summary actions, their rendering into dialogue acts, and the policies
//! choosing them: feudal GP-SARSA stacks, the flat baseline and a handcrafted
//! rule chain.

mod feudal;
pub mod gp;
pub mod summary;

use std::collections::BTreeMap;

use crate::acts::{ActType, DialogueAct, SlotFiller};
use crate::belief::Label;
use crate::entities::ConversationalWorld;
use crate::error::{Error, Result};
use crate::ontology::{query_kb, ObjectTypeDef, Ontology, DONTCARE, NAME_SLOT};
use crate::tracking::FocusStateResult;

pub use feudal::{Decision, FeudalStack, MddmPolicy, ObjectPolicy, PolicyKind, PolicySet, MASTER_OBJECT};
pub use gp::{GpParams, GpSarsa, Mode};
pub use summary::{constraints_from, summarize, BeliefSummary};

/// Value of `name` in an offer that found no matching record.
pub const NO_MATCH: &str = "none";

/// Actions of an object sub-policy.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectAction {
    Request(String),
    Confirm(String),
    InformByConstraints,
    InformAlternatives,
    InformRequested,
    Bye,
}

impl ObjectAction {
    pub fn name(&self) -> String {
        match self {
            ObjectAction::Request(s) => format!("request_{s}"),
            ObjectAction::Confirm(s) => format!("confirm_{s}"),
            ObjectAction::InformByConstraints => "inform_byconstraints".into(),
            ObjectAction::InformAlternatives => "inform_alternatives".into(),
            ObjectAction::InformRequested => "inform_requested".into(),
            ObjectAction::Bye => "bye".into(),
        }
    }

    pub fn parse(name: &str) -> Option<ObjectAction> {
        Some(match name {
            "inform_byconstraints" => ObjectAction::InformByConstraints,
            "inform_alternatives" => ObjectAction::InformAlternatives,
            "inform_requested" => ObjectAction::InformRequested,
            "bye" => ObjectAction::Bye,
            _ => {
                if let Some(s) = name.strip_prefix("request_") {
                    ObjectAction::Request(s.to_string())
                } else if let Some(s) = name.strip_prefix("confirm_") {
                    ObjectAction::Confirm(s.to_string())
                } else {
                    return None;
                }
            }
        })
    }

    /// The full action space for objects of `ty`.
    pub fn all(ty: &ObjectTypeDef) -> Vec<ObjectAction> {
        let mut out = Vec::new();
        for s in &ty.informable {
            out.push(ObjectAction::Request(s.name.clone()));
            out.push(ObjectAction::Confirm(s.name.clone()));
        }
        out.extend([
            ObjectAction::InformByConstraints,
            ObjectAction::InformAlternatives,
            ObjectAction::InformRequested,
            ObjectAction::Bye,
        ]);
        out
    }
}

/// Any action the system can choose, at either level of the feudal stack.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SummaryAction {
    Object(ObjectAction),
    ConfirmRel { relation: String, attribute: String },
    SelectObject,
    SelectRelation(String),
}

impl SummaryAction {
    pub fn name(&self) -> String {
        match self {
            SummaryAction::Object(a) => a.name(),
            SummaryAction::ConfirmRel { attribute, .. } => format!("confirm_rel_{attribute}"),
            SummaryAction::SelectObject => MASTER_OBJECT.into(),
            SummaryAction::SelectRelation(id) => format!("relation_{id}"),
        }
    }
}

/// Object actions allowed in the current state.
///
/// Confirming needs a value to confirm; alternatives need an offer and a
/// user request for them; answering needs an offer and open requests; closing
/// needs an offer for every object and no open requests.
pub fn valid_object_actions(world: &ConversationalWorld, fs: &FocusStateResult) -> Result<Vec<ObjectAction>> {
    let obj = world.object(&fs.object)?;
    let offered = obj.context.offered.is_some();
    let all_offered = world.objects.iter().all(|o| o.context.offered.is_some());
    Ok(ObjectAction::all(&obj.ty)
        .into_iter()
        .filter(|a| match a {
            ObjectAction::Request(_) | ObjectAction::InformByConstraints => true,
            ObjectAction::Confirm(s) => !fs.merged[s].argmax().0.is_none(),
            ObjectAction::InformAlternatives => offered && obj.alternatives_requested,
            ObjectAction::InformRequested => offered && !obj.pending_requests.is_empty(),
            ObjectAction::Bye => all_offered && obj.pending_requests.is_empty(),
        })
        .collect())
}

fn constraint_fillers(object: &str, ty: &ObjectTypeDef, constraints: &BTreeMap<String, String>) -> Vec<SlotFiller> {
    ty.informable
        .iter()
        .filter_map(|s| constraints.get(&s.name).map(|v| (s, v)))
        .filter(|(_, v)| v.as_str() != DONTCARE)
        .map(|(s, v)| SlotFiller::literal(object, &s.name, v))
        .collect()
}

/// Renders a summary action for the focus object as a system act.
pub fn to_master_act(
    action: &SummaryAction,
    world: &ConversationalWorld,
    ontology: &Ontology,
    fs: &FocusStateResult,
) -> Result<DialogueAct> {
    let object = fs.object.as_str();
    let obj = world.object(object)?;
    let ty = &obj.ty;
    let constraints = constraints_from(fs);
    Ok(match action {
        SummaryAction::Object(ObjectAction::Request(s)) => {
            DialogueAct::new(ActType::Request, vec![SlotFiller::bare(object, s)])
        }
        SummaryAction::Object(ObjectAction::Confirm(s)) => {
            let m = fs.merged.get(s).ok_or_else(|| Error::UnknownSlot {
                ty: ty.name.clone(),
                slot: s.clone(),
            })?;
            let value = match m.top_non_none() {
                Some((l, _)) => l.as_str().to_string(),
                None => return Err(Error::InvalidAct(format!("nothing to confirm for `{s}`"))),
            };
            DialogueAct::new(ActType::Confirm, vec![SlotFiller::literal(object, s, &value)])
        }
        SummaryAction::Object(ObjectAction::InformByConstraints) => {
            let matches = query_kb(ontology, &ty.name, &constraints)?;
            offer_act(object, ty, &constraints, matches.first().map(|r| r.name.as_str()), &[])
        }
        SummaryAction::Object(ObjectAction::InformAlternatives) => {
            let matches = query_kb(ontology, &ty.name, &constraints)?;
            let fresh = matches.iter().find(|r| !obj.offered_names.contains(&r.name));
            offer_act(object, ty, &constraints, fresh.map(|r| r.name.as_str()), &obj.offered_names)
        }
        SummaryAction::Object(ObjectAction::InformRequested) => {
            let record = obj
                .context
                .offered
                .as_ref()
                .ok_or_else(|| Error::InvalidAct("no offer to inform about".into()))?;
            let mut fillers = vec![SlotFiller::literal(object, NAME_SLOT, &record.name)];
            for slot in &ty.requestable {
                if obj.pending_requests.contains(slot) {
                    if let Some(v) = record.get(slot) {
                        fillers.push(SlotFiller::literal(object, slot, v));
                    }
                }
            }
            DialogueAct::new(ActType::Inform, fillers)
        }
        SummaryAction::Object(ObjectAction::Bye) => DialogueAct::bye(),
        SummaryAction::ConfirmRel { relation, attribute } => {
            let rel = world.relation(relation)?;
            let attr = rel
                .attribute(attribute)
                .ok_or_else(|| Error::UnknownEntity(format!("{relation}.{attribute}")))?;
            let other = rel
                .other_endpoint(object)
                .ok_or_else(|| Error::InvalidAct(format!("`{relation}` does not touch `{object}`")))?;
            let (own, other_slot) = rel.slots_for(object, attr);
            DialogueAct::new(ActType::Confirm, vec![SlotFiller::relation(other, &other_slot, object, &own)])
        }
        SummaryAction::SelectObject | SummaryAction::SelectRelation(_) => {
            return Err(Error::InvalidAct("master choices are not dialogue acts".into()))
        }
    })
}

fn offer_act(
    object: &str,
    ty: &ObjectTypeDef,
    constraints: &BTreeMap<String, String>,
    name: Option<&str>,
    excluded: &[String],
) -> DialogueAct {
    let mut fillers = vec![SlotFiller::literal(object, NAME_SLOT, name.unwrap_or(NO_MATCH))];
    if name.is_none() {
        fillers.extend(excluded.iter().map(|n| SlotFiller::negated(object, NAME_SLOT, n)));
    }
    fillers.extend(constraint_fillers(object, ty, constraints));
    DialogueAct::new(ActType::Inform, fillers)
}

/// Top non-NONE probability below which the handcrafted policy confirms.
const CONFIRM_BELOW: f64 = 0.5;

/// Rule chain: alternatives on reqalts, answers to open requests, confirmation
/// of weak values, then requests for unfilled slots in type order until the
/// constraints match at most one record.
pub fn handcrafted_policy(world: &ConversationalWorld, ontology: &Ontology, fs: &FocusStateResult) -> Result<ObjectAction> {
    let obj = world.object(&fs.object)?;
    let offered = obj.context.offered.is_some();
    if offered && obj.alternatives_requested {
        return Ok(ObjectAction::InformAlternatives);
    }
    if offered && !obj.pending_requests.is_empty() {
        return Ok(ObjectAction::InformRequested);
    }
    for slot in &obj.ty.informable {
        let m = &fs.merged[&slot.name];
        if let Some((_, p)) = m.top_non_none() {
            if p > 0.0 && p < CONFIRM_BELOW && !obj.history[&slot.name].system_confirmed {
                return Ok(ObjectAction::Confirm(slot.name.clone()));
            }
        }
    }
    let constraints = constraints_from(fs);
    let count = query_kb(ontology, &obj.ty.name, &constraints)?.len();
    let unfilled = obj
        .ty
        .informable
        .iter()
        .find(|s| matches!(fs.merged[&s.name].argmax().0, Label::None));
    Ok(match unfilled {
        Some(s) if count > 1 => ObjectAction::Request(s.name.clone()),
        _ => ObjectAction::InformByConstraints,
    })
}
