use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gp::{GpParams, GpSarsa, Mode};
use super::summary::{self, master_dim, object_dim, relation_dim};
use super::{handcrafted_policy, to_master_act, valid_object_actions, ObjectAction, SummaryAction};
use crate::acts::DialogueAct;
use crate::belief::Label;
use crate::entities::ConversationalWorld;
use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::tracking::{focus_state, BeliefModel, FocusStateResult};

/// Master action handing control to the object sub-policy.
pub const MASTER_OBJECT: &str = "object";

/// Master policy plus object sub-policy of one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeudalStack {
    pub master: GpSarsa,
    pub object: GpSarsa,
}

/// Flat per-object learner of the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MddmPolicy {
    pub learner: GpSarsa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObjectPolicy {
    Handcrafted,
    Cedm(FeudalStack),
    Mddm(MddmPolicy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Handcrafted,
    Cedm,
    Mddm,
}

/// One system turn's choice.
#[derive(Clone, Debug)]
pub struct Decision {
    pub object: String,
    pub focus_state: FocusStateResult,
    pub master: Option<String>,
    pub action: SummaryAction,
    pub act: DialogueAct,
}

/// Policies of every object of a world, and relation sub-policies shared by
/// the stacks of both endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub objects: BTreeMap<String, ObjectPolicy>,
    pub relations: BTreeMap<String, GpSarsa>,
}

fn names(actions: &[ObjectAction]) -> Vec<String> {
    actions.iter().map(ObjectAction::name).collect()
}

impl PolicySet {
    pub fn new(world: &ConversationalWorld, kinds: &BTreeMap<String, PolicyKind>, params: GpParams) -> Result<Self> {
        let mut objects = BTreeMap::new();
        let mut relations = BTreeMap::new();
        for obj in &world.objects {
            let kind = *kinds
                .get(&obj.id)
                .ok_or_else(|| Error::Config(format!("no policy kind for object `{}`", obj.id)))?;
            let all = names(&ObjectAction::all(&obj.ty));
            let policy = match kind {
                PolicyKind::Handcrafted => ObjectPolicy::Handcrafted,
                PolicyKind::Mddm => ObjectPolicy::Mddm(MddmPolicy {
                    learner: GpSarsa::new(object_dim(&obj.ty), &all, params),
                }),
                PolicyKind::Cedm => {
                    let rels: Vec<_> = world.relations_of(&obj.id).collect();
                    let mut master_actions = vec![MASTER_OBJECT.to_string()];
                    for rel in &rels {
                        master_actions.push(SummaryAction::SelectRelation(rel.id.clone()).name());
                        relations.entry(rel.id.clone()).or_insert_with(|| {
                            let acts: Vec<String> = rel
                                .attributes
                                .iter()
                                .map(|a| {
                                    SummaryAction::ConfirmRel {
                                        relation: rel.id.clone(),
                                        attribute: a.name.clone(),
                                    }
                                    .name()
                                })
                                .collect();
                            GpSarsa::new(relation_dim(rel), &acts, params)
                        });
                    }
                    ObjectPolicy::Cedm(FeudalStack {
                        master: GpSarsa::new(master_dim(&obj.ty, &rels), &master_actions, params),
                        object: GpSarsa::new(object_dim(&obj.ty), &all, params),
                    })
                }
            };
            objects.insert(obj.id.clone(), policy);
        }
        Ok(PolicySet { objects, relations })
    }

    /// The tracker variant matching these policies: entity-relation tracking
    /// as soon as any object uses the feudal stack.
    pub fn belief_model(&self) -> BeliefModel {
        if self.objects.values().any(|p| matches!(p, ObjectPolicy::Cedm(_))) {
            BeliefModel::Cedm
        } else {
            BeliefModel::Mddm
        }
    }

    pub fn policy(&self, object: &str) -> Result<&ObjectPolicy> {
        self.objects.get(object).ok_or_else(|| Error::UnknownEntity(object.to_string()))
    }

    /// Chooses the next system act for the focus object (the first object if
    /// the focus is empty). With `learn`, decisions are recorded for training.
    pub fn decide<R: Rng>(
        &mut self,
        world: &ConversationalWorld,
        ontology: &Ontology,
        mode: Mode,
        learn: bool,
        rng: &mut R,
    ) -> Result<Decision> {
        let model = self.belief_model();
        let object = match world.focus_object() {
            Some(o) => o.to_string(),
            None => world.objects.first().map(|o| o.id.clone()).ok_or(Error::EmptyFocus)?,
        };
        let fs = focus_state(world, &object, model)?;
        let mut master_choice = None;
        let policy = self
            .objects
            .get_mut(&object)
            .ok_or_else(|| Error::UnknownEntity(object.clone()))?;
        let action = match policy {
            ObjectPolicy::Handcrafted => SummaryAction::Object(handcrafted_policy(world, ontology, &fs)?),
            ObjectPolicy::Mddm(p) => {
                let x = summary::object_features(world, ontology, &fs)?;
                let valid = names(&valid_object_actions(world, &fs)?);
                let a = p.learner.select(&x, &valid, mode, rng)?;
                if learn {
                    p.learner.record(&x, &a)?;
                }
                SummaryAction::Object(ObjectAction::parse(&a).expect("learner actions are object actions"))
            }
            ObjectPolicy::Cedm(stack) => {
                let s = summary::summarize(world, ontology, &fs)?;
                let mut valid_master = vec![MASTER_OBJECT.to_string()];
                let mut valid_rel: BTreeMap<String, Vec<String>> = BTreeMap::new();
                for rel in world.active_relations_of(&object) {
                    let acts: Vec<String> = rel
                        .attributes
                        .iter()
                        .filter(|a| rel.user_goal[&a.name].prob(&Label::Equals) > 0.0)
                        .map(|a| {
                            SummaryAction::ConfirmRel {
                                relation: rel.id.clone(),
                                attribute: a.name.clone(),
                            }
                            .name()
                        })
                        .collect();
                    if !acts.is_empty() {
                        valid_master.push(SummaryAction::SelectRelation(rel.id.clone()).name());
                        valid_rel.insert(rel.id.clone(), acts);
                    }
                }
                let choice = if valid_master.len() > 1 {
                    let c = stack.master.select(&s.master, &valid_master, mode, rng)?;
                    if learn {
                        stack.master.record(&s.master, &c)?;
                    }
                    master_choice = Some(c.clone());
                    c
                } else {
                    MASTER_OBJECT.to_string()
                };
                if choice == MASTER_OBJECT {
                    let valid = names(&valid_object_actions(world, &fs)?);
                    let a = stack.object.select(&s.object, &valid, mode, rng)?;
                    if learn {
                        stack.object.record(&s.object, &a)?;
                    }
                    SummaryAction::Object(ObjectAction::parse(&a).expect("learner actions are object actions"))
                } else {
                    let rel_id = choice.strip_prefix("relation_").expect("master relation action").to_string();
                    let learner = self.relations.get_mut(&rel_id).ok_or_else(|| Error::UnknownEntity(rel_id.clone()))?;
                    let x = &s.relations[&rel_id];
                    let a = learner.select(x, &valid_rel[&rel_id], mode, rng)?;
                    if learn {
                        learner.record(x, &a)?;
                    }
                    let attribute = a.strip_prefix("confirm_rel_").expect("relation action").to_string();
                    SummaryAction::ConfirmRel {
                        relation: rel_id,
                        attribute,
                    }
                }
            }
        };
        let act = to_master_act(&action, world, ontology, &fs)?;
        Ok(Decision {
            object,
            focus_state: fs,
            master: master_choice,
            action,
            act,
        })
    }

    fn learners_of<'a>(&'a mut self, world: &ConversationalWorld, object: &str) -> Vec<&'a mut GpSarsa> {
        let rel_ids: Vec<String> = world.relations_of(object).map(|r| r.id.clone()).collect();
        let mut out = Vec::new();
        let is_cedm = matches!(self.objects.get(object), Some(ObjectPolicy::Cedm(_)));
        match self.objects.get_mut(object) {
            Some(ObjectPolicy::Cedm(stack)) => {
                out.push(&mut stack.master);
                out.push(&mut stack.object);
            }
            Some(ObjectPolicy::Mddm(p)) => out.push(&mut p.learner),
            _ => {}
        }
        if is_cedm {
            for (id, learner) in self.relations.iter_mut() {
                if rel_ids.contains(id) {
                    out.push(learner);
                }
            }
        }
        out
    }

    /// Credits `r` to every learner serving `object`.
    pub fn reward(&mut self, world: &ConversationalWorld, object: &str, r: f64) {
        for learner in self.learners_of(world, object) {
            learner.reward(r);
        }
    }

    fn all_learners(&mut self) -> Vec<&mut GpSarsa> {
        let mut out = Vec::new();
        for p in self.objects.values_mut() {
            match p {
                ObjectPolicy::Cedm(stack) => {
                    out.push(&mut stack.master);
                    out.push(&mut stack.object);
                }
                ObjectPolicy::Mddm(p) => out.push(&mut p.learner),
                ObjectPolicy::Handcrafted => {}
            }
        }
        out.extend(self.relations.values_mut());
        out
    }

    pub fn begin_episode(&mut self) {
        for l in self.all_learners() {
            l.begin_episode();
        }
    }

    pub fn end_episode(&mut self) -> Result<()> {
        for l in self.all_learners() {
            l.end_episode()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policies serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
