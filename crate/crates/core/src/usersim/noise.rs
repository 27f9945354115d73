//! Semantic channel noise: confusions and n-best confidences.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::acts::{ActType, DialogueAct, FillerValue, Observation, QualifiedSlot, SlotFiller};
use crate::error::{Error, Result};
use crate::ontology::{ObjectTypeDef, DONTCARE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModelConfig {
    /// Probability that the top hypothesis is corrupted.
    pub ser: f64,
    pub nbest: usize,
    /// Confusion mix; the three weights are normalised.
    #[serde(default = "default_substitution")]
    pub substitution: f64,
    #[serde(default = "default_act_type")]
    pub act_type: f64,
    #[serde(default = "default_deletion")]
    pub deletion: f64,
    /// Within substitutions of a relation filler, the chance of producing the
    /// literal value the relation stands for.
    #[serde(default = "default_relation_literal")]
    pub relation_literal: f64,
}

fn default_substitution() -> f64 {
    0.70
}
fn default_act_type() -> f64 {
    0.15
}
fn default_deletion() -> f64 {
    0.15
}
fn default_relation_literal() -> f64 {
    0.5
}

impl ErrorModelConfig {
    pub fn new(ser: f64, nbest: usize) -> Self {
        ErrorModelConfig {
            ser,
            nbest,
            substitution: default_substitution(),
            act_type: default_act_type(),
            deletion: default_deletion(),
            relation_literal: default_relation_literal(),
        }
    }

    /// Clean channel, single hypothesis.
    pub fn env1() -> Self {
        ErrorModelConfig::new(0.0, 1)
    }

    /// 15% semantic error rate, 3-best lists.
    pub fn env3() -> Self {
        ErrorModelConfig::new(0.15, 3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ser) || self.nbest == 0 {
            return Err(Error::Config(format!("invalid error model ser={} nbest={}", self.ser, self.nbest)));
        }
        let w = [self.substitution, self.act_type, self.deletion];
        if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 || !(0.0..=1.0).contains(&self.relation_literal) {
            return Err(Error::Config("invalid confusion weights".into()));
        }
        Ok(())
    }
}

fn substitute_value<R: Rng>(
    rng: &mut R,
    filler: &SlotFiller,
    ty: &ObjectTypeDef,
    resolve: &dyn Fn(&QualifiedSlot) -> Option<String>,
    relation_literal: f64,
) -> Option<SlotFiller> {
    let slot = ty.slot(&filler.slot.slot)?;
    let mut alternatives: Vec<&str> = slot.values.iter().map(String::as_str).collect();
    alternatives.push(DONTCARE);
    let (current, negated) = match &filler.value {
        Some(FillerValue::Literal(v)) => (Some(v.as_str()), false),
        Some(FillerValue::Dontcare) => (Some(DONTCARE), false),
        Some(FillerValue::Negated(v)) => (Some(v.as_str()), true),
        Some(FillerValue::Relation(_)) => {
            let literal = resolve(&filler.slot);
            if let Some(v) = literal.as_deref() {
                if rng.random_bool(relation_literal) {
                    return Some(SlotFiller::literal(&filler.slot.entity, &filler.slot.slot, v));
                }
            }
            (None, false)
        }
        None => return None,
    };
    alternatives.retain(|v| Some(*v) != current);
    let v = alternatives.choose(rng)?;
    Some(if negated {
        SlotFiller::negated(&filler.slot.entity, &filler.slot.slot, v)
    } else {
        SlotFiller::literal(&filler.slot.entity, &filler.slot.slot, v)
    })
}

/// One corrupted version of `act`, always different from it.
fn confuse<R: Rng>(
    rng: &mut R,
    act: &DialogueAct,
    config: &ErrorModelConfig,
    types: &BTreeMap<String, ObjectTypeDef>,
    resolve: &dyn Fn(&QualifiedSlot) -> Option<String>,
) -> DialogueAct {
    let total = config.substitution + config.act_type + config.deletion;
    let u = rng.random::<f64>() * total;
    let valued: Vec<usize> = (0..act.fillers.len()).filter(|i| act.fillers[*i].value.is_some()).collect();
    if u < config.substitution && !valued.is_empty() {
        let i = *valued.choose(rng).expect("non-empty");
        let f = &act.fillers[i];
        if let Some(ty) = types.get(&f.slot.entity) {
            if let Some(new) = substitute_value(rng, f, ty, resolve, config.relation_literal) {
                let mut out = act.clone();
                out.fillers[i] = new;
                return out;
            }
        }
    }
    if u >= config.substitution + config.act_type && !act.fillers.is_empty() {
        let mut out = act.clone();
        let i = rng.random_range(0..out.fillers.len());
        out.fillers.remove(i);
        if out.act_type == ActType::Request && out.fillers.is_empty() {
            out.act_type = ActType::Inform;
        }
        return out;
    }
    // Act-type confusion, also the fallback when the other kinds do not apply.
    let options: &[ActType] = if act.fillers.is_empty() {
        &[ActType::Affirm, ActType::Negate, ActType::Reqalts, ActType::Inform]
    } else if act.act_type == ActType::Request {
        &[ActType::Request]
    } else {
        &[ActType::Inform, ActType::Negate, ActType::Reqalts, ActType::Affirm]
    };
    if act.act_type == ActType::Request {
        // A request can only be confused into a request for another slot.
        let f = &act.fillers[0];
        if let Some(ty) = types.get(&f.slot.entity) {
            let others: Vec<&String> = ty.requestable.iter().filter(|s| !act.fillers.iter().any(|g| &&g.slot.slot == s)).collect();
            if let Some(s) = others.choose(rng) {
                let mut out = act.clone();
                out.fillers[0] = SlotFiller::bare(&f.slot.entity, s);
                return out;
            }
        }
        let mut out = act.clone();
        out.fillers.clear();
        out.act_type = ActType::Inform;
        return out;
    }
    let choices: Vec<ActType> = options.iter().copied().filter(|a| *a != act.act_type).collect();
    let mut out = act.clone();
    out.act_type = *choices.choose(rng).expect("at least two options");
    if matches!(act.act_type, ActType::Hello | ActType::Bye) {
        out.fillers.clear();
    }
    out
}

/// Turns the user's act into an n-best observation.
///
/// With probability `1 - ser` the true act is the top hypothesis; otherwise a
/// confusion is. Lower ranks hold further distinct confusions, with the true act
/// at rank two half the time its top slot was lost. Confidences come from a
/// Gamma draw normalised together with a "no input" remainder.
pub fn apply_error_model<R: Rng>(
    rng: &mut R,
    act: &DialogueAct,
    config: &ErrorModelConfig,
    types: &BTreeMap<String, ObjectTypeDef>,
    resolve: &dyn Fn(&QualifiedSlot) -> Option<String>,
) -> Result<Observation> {
    config.validate()?;
    if config.ser == 0.0 {
        return Ok(Observation::certain(act.clone()));
    }
    let mut hyps: Vec<DialogueAct> = Vec::with_capacity(config.nbest);
    let corrupted = rng.random_bool(config.ser);
    if corrupted {
        hyps.push(confuse(rng, act, config, types, resolve));
        if config.nbest > 1 && rng.random_bool(0.5) {
            hyps.push(act.clone());
        }
    } else {
        hyps.push(act.clone());
    }
    let mut attempts = 0;
    while hyps.len() < config.nbest && attempts < 10 * config.nbest {
        attempts += 1;
        let c = confuse(rng, act, config, types, resolve);
        if !hyps.contains(&c) {
            hyps.push(c);
        }
    }
    let shapes = std::iter::once(3.0).chain(std::iter::repeat(1.0)).take(hyps.len());
    let mut draws: Vec<f64> = shapes
        .map(|k| Gamma::new(k, 1.0).expect("positive shape").sample(rng))
        .collect();
    let null: f64 = Gamma::new(0.5, 1.0).expect("positive shape").sample(rng);
    let total: f64 = draws.iter().sum::<f64>() + null;
    for d in &mut draws {
        *d /= total;
    }
    draws.sort_by(|a, b| b.total_cmp(a));
    Observation::new(hyps.into_iter().zip(draws).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acts::parse_act;
    use crate::ontology::Ontology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn types() -> BTreeMap<String, ObjectTypeDef> {
        let o = Ontology::cambridge(1);
        o.types.iter().map(|t| (t.name.clone(), t.clone())).collect()
    }

    #[test]
    fn clean_channel_is_identity() {
        let act = parse_act("inform(CamRestaurants#food=\"british\")").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = apply_error_model(&mut rng, &act, &ErrorModelConfig::env1(), &types(), &|_| None).unwrap();
        assert_eq!(obs.hypotheses(), &[(act, 1.0)]);
    }

    #[test]
    fn confusions_differ_from_the_original() {
        let t = types();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ErrorModelConfig::env3();
        for text in [
            "inform(CamRestaurants#food=\"british\", CamRestaurants#area=\"west\")",
            "request(CamRestaurants#phone)",
            "reqalts()",
            "affirm()",
            "negate(CamRestaurants#area=\"west\")",
            "inform(CamRestaurants#area=CamHotels#area)",
        ] {
            let act = parse_act(text).unwrap();
            for _ in 0..200 {
                let c = confuse(&mut rng, &act, &cfg, &t, &|_| Some("west".into()));
                assert_ne!(c, act, "{text}");
                c.validate().unwrap();
            }
        }
    }
}
