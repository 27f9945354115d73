use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::acts::{render_act, ActType, DialogueAct};
use crate::entities::{new_world, ConversationalWorld};
use crate::error::{Error, Result};
use crate::ontology::{ObjectTypeDef, Ontology};
use crate::policy::{Mode, PolicyKind, PolicySet, SummaryAction};
use crate::tracking::{apply_system_act, track_turn};
use crate::usersim::{apply_error_model, evaluate_success, sample_goal, GoalChange, UserGoal, UserSim};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub role: Role,
    pub act: String,
    /// The n-best list the system received (user turns only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observation: Vec<(String, f64)>,
    /// Focus-state snapshot per slot the decision was based on (system turns only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub belief: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    /// Reward charged at this turn (user turns close an exchange).
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectOutcome {
    pub object: String,
    /// 0 for the object the user talks about first.
    pub position: usize,
    pub policy: PolicyKind,
    pub success: bool,
    pub turns: usize,
    #[serde(rename = "return")]
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    UserBye,
    TurnCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub episode: usize,
    pub config_hash: String,
    pub goal: UserGoal,
    pub goal_changes: Vec<GoalChange>,
    pub turns: Vec<TurnRecord>,
    pub objects: Vec<ObjectOutcome>,
    pub system_relation_acts: usize,
    pub user_relation_acts: usize,
    pub end: EndReason,
}

impl EpisodeLog {
    pub fn outcome(&self, object: &str) -> Option<&ObjectOutcome> {
        self.objects.iter().find(|o| o.object == object)
    }

    pub fn at_position(&self, position: usize) -> Option<&ObjectOutcome> {
        self.objects.iter().find(|o| o.position == position)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("logs serialize")
    }
}

/// Ontology, world template and config shared by all dialogues of a run.
pub struct Simulation<'a> {
    pub ontology: &'a Ontology,
    pub config: &'a RunConfig,
    pub template: ConversationalWorld,
    types: BTreeMap<String, ObjectTypeDef>,
    config_hash: String,
}

impl<'a> Simulation<'a> {
    pub fn new(ontology: &'a Ontology, config: &'a RunConfig) -> Result<Self> {
        config.validate()?;
        let mut declared = Vec::new();
        let mut types = BTreeMap::new();
        for spec in &config.objects {
            let ty = ontology.object_type(spec.type_name())?.clone();
            types.insert(spec.id.clone(), ty.clone());
            declared.push((spec.id.clone(), Arc::new(ty)));
        }
        Ok(Simulation {
            ontology,
            config,
            template: new_world(&declared)?,
            types,
            config_hash: config.hash(),
        })
    }

    pub fn new_policies(&self) -> Result<PolicySet> {
        PolicySet::new(&self.template, &self.config.policy_kinds(), self.config.learning.gp)
    }

    /// Runs one simulated dialogue. With `learn`, the learners collect the
    /// episode and are updated at its end.
    pub fn run_dialogue<R: Rng>(
        &self,
        policies: &mut PolicySet,
        mode: Mode,
        learn: bool,
        rng: &mut R,
        seed: u64,
        episode: usize,
    ) -> Result<EpisodeLog> {
        let cfg = self.config;
        let mut world = self.template.clone();
        let goal = sample_goal(rng, self.ontology, &self.template, cfg.order)?;
        let first = goal.objects[0].object.clone();
        let mut sim = UserSim::new(self.ontology, &self.template, goal.clone(), cfg.user_config());
        if learn {
            policies.begin_episode();
        }
        let model = policies.belief_model();
        let penalty = cfg.reward.turn_penalty;
        let cap = cfg.max_turns_per_object;

        let mut turns: BTreeMap<String, usize> = BTreeMap::new();
        let mut capped: BTreeSet<String> = BTreeSet::new();
        let mut system_acts: Vec<DialogueAct> = Vec::new();
        let mut records = Vec::new();
        let mut system_relation_acts = 0;

        // The greeting exchange is charged to the object the user opens with.
        let mut sys_act = DialogueAct::hello();
        let mut charged = first;
        records.push(TurnRecord {
            role: Role::System,
            act: render_act(&sys_act),
            observation: Vec::new(),
            belief: BTreeMap::new(),
            object: None,
            master: None,
            action: None,
            reward: 0.0,
        });
        let end = loop {
            let user_act = sim.respond(rng, &sys_act);
            let n = turns.entry(charged.clone()).or_insert(0);
            *n += 1;
            if learn {
                policies.reward(&world, &charged, -penalty);
            }
            let mut record = TurnRecord {
                role: Role::User,
                act: render_act(&user_act),
                observation: Vec::new(),
                belief: BTreeMap::new(),
                object: Some(charged.clone()),
                master: None,
                action: None,
                reward: -penalty,
            };
            if user_act.act_type == ActType::Bye {
                records.push(record);
                break EndReason::UserBye;
            }
            if *n >= cap {
                capped.insert(charged.clone());
                records.push(record);
                break EndReason::TurnCap;
            }
            let obs = apply_error_model(rng, &user_act, &cfg.environment, &self.types, &|s| sim.intended(s))?;
            record.observation = obs.hypotheses().iter().map(|(a, c)| (render_act(a), *c)).collect();
            records.push(record);
            track_turn(&mut world, &sys_act, &obs, model)?;

            let decision = policies.decide(&world, self.ontology, mode, learn, rng)?;
            apply_system_act(&mut world, self.ontology, &decision.act)?;
            if matches!(decision.action, SummaryAction::ConfirmRel { .. }) {
                system_relation_acts += 1;
            }
            records.push(TurnRecord {
                role: Role::System,
                act: render_act(&decision.act),
                observation: Vec::new(),
                belief: decision
                    .focus_state
                    .merged
                    .iter()
                    .map(|(s, m)| (s.clone(), m.snapshot()))
                    .collect(),
                object: Some(decision.object.clone()),
                master: decision.master.clone(),
                action: Some(decision.action.name()),
                reward: 0.0,
            });
            sys_act = decision.act.clone();
            charged = decision.object;
            system_acts.push(decision.act);
        };

        let final_goal = sim.goal().clone();
        let success = evaluate_success(&final_goal, self.ontology, &world, &system_acts);
        let mut objects = Vec::new();
        for (position, g) in final_goal.objects.iter().enumerate() {
            let ok = success.get(&g.object).copied().unwrap_or(false) && !capped.contains(&g.object);
            let t = turns.get(&g.object).copied().unwrap_or(0).min(cap);
            if learn && ok {
                policies.reward(&world, &g.object, cfg.reward.success_bonus);
            }
            let policy = cfg
                .objects
                .iter()
                .find(|o| o.id == g.object)
                .map(|o| o.policy)
                .ok_or_else(|| Error::UnknownEntity(g.object.clone()))?;
            objects.push(ObjectOutcome {
                object: g.object.clone(),
                position,
                policy,
                success: ok,
                turns: t,
                ret: if ok { cfg.reward.success_bonus } else { 0.0 } - penalty * t as f64,
            });
        }
        if learn {
            policies.end_episode()?;
        }
        Ok(EpisodeLog {
            seed,
            episode,
            config_hash: self.config_hash.clone(),
            goal: final_goal,
            goal_changes: sim.goal_changes().to_vec(),
            turns: records,
            objects,
            system_relation_acts,
            user_relation_acts: sim.relation_acts(),
            end,
        })
    }
}

/// A recorded dialogue: alternating system and user acts.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub turns: Vec<(Role, DialogueAct)>,
}

impl Transcript {
    /// Parses lines of the form `system: <act>` or `user: <act>`; blank lines
    /// and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut turns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (role, act) = line.split_once(':').ok_or_else(|| Error::Parse {
                location: format!("line {}", i + 1),
                message: "expected `system:` or `user:`".into(),
            })?;
            let role = match role.trim() {
                "system" => Role::System,
                "user" => Role::User,
                other => {
                    return Err(Error::Parse {
                        location: format!("line {}", i + 1),
                        message: format!("unknown speaker `{other}`"),
                    })
                }
            };
            turns.push((role, crate::acts::parse_act(act.trim())?));
        }
        Ok(Transcript { turns })
    }
}

/// What a replay produced.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub system_acts: Vec<DialogueAct>,
    /// Exchanges per object, each charged to the object in focus when the
    /// system spoke (the greeting to the object the user opens with).
    pub exchanges: BTreeMap<String, usize>,
}

/// Feeds a transcript through the tracker with certain observations.
/// `inspect` sees the world after every turn, with the turn's index.
pub fn replay(
    world: &mut ConversationalWorld,
    ontology: &Ontology,
    transcript: &Transcript,
    model: crate::tracking::BeliefModel,
    mut inspect: impl FnMut(usize, &ConversationalWorld),
) -> Result<ReplayOutcome> {
    let mut last_system = DialogueAct::hello();
    let mut charged: Option<String> = None;
    let mut greeting_pending = false;
    let mut out = ReplayOutcome {
        system_acts: Vec::new(),
        exchanges: BTreeMap::new(),
    };
    for (i, (role, act)) in transcript.turns.iter().enumerate() {
        match role {
            Role::System => {
                if act.act_type == ActType::Hello {
                    greeting_pending = true;
                    charged = None;
                } else {
                    charged = world.focus_object().map(str::to_string);
                }
                apply_system_act(world, ontology, act)?;
                if act.act_type != ActType::Hello && act.act_type != ActType::Bye {
                    out.system_acts.push(act.clone());
                }
                last_system = act.clone();
            }
            Role::User => {
                track_turn(world, &last_system, &crate::acts::Observation::certain(act.clone()), model)?;
                if greeting_pending {
                    charged = world.focus_object().map(str::to_string);
                    greeting_pending = false;
                }
                if let Some(o) = &charged {
                    *out.exchanges.entry(o.clone()).or_insert(0) += 1;
                }
            }
        }
        inspect(i, world);
    }
    Ok(out)
}
