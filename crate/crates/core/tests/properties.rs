use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use cedm::acts::{parse_act, render_act, ActType, DialogueAct, Observation, SlotFiller};
use cedm::belief::{Label, Marginal};
use cedm::entities::{new_world, ConversationalWorld};
use cedm::ontology::{query_kb, Ontology, DONTCARE};
use cedm::tracking::{focus_state, merge_slot, track_turn, weighted_relation_belief, BeliefModel};

const OBJECTS: [&str; 2] = ["CamHotels", "CamRestaurants"];
const SHARED: [&str; 2] = ["area", "pricerange"];

fn cambridge() -> &'static Ontology {
    static ONTOLOGY: std::sync::OnceLock<Ontology> = std::sync::OnceLock::new();
    ONTOLOGY.get_or_init(|| Ontology::cambridge(0))
}

fn world() -> ConversationalWorld {
    let types: Vec<_> = OBJECTS
        .iter()
        .map(|t| (t.to_string(), Arc::new(cambridge().object_type(t).unwrap().clone())))
        .collect();
    new_world(&types).unwrap()
}

/// Index tuple a user or system act is built from.
type Pick = (u8, u8, u8, u8, u8);

fn pick_slot(entity: &str, i: u8) -> (String, Vec<String>) {
    let ty = cambridge().object_type(entity).unwrap();
    let s = &ty.informable[i as usize % ty.informable.len()];
    (s.name.clone(), s.values.clone())
}

fn pick_value(values: &[String], i: u8) -> String {
    // One in eight picks is dontcare.
    if i % 8 == 0 {
        DONTCARE.to_string()
    } else {
        values[i as usize % values.len()].clone()
    }
}

fn user_act((kind, e, s, v, w): Pick) -> DialogueAct {
    let entity = OBJECTS[e as usize % 2];
    let other = OBJECTS[(e as usize + 1) % 2];
    let (slot, values) = pick_slot(entity, s);
    let literal = SlotFiller::literal(entity, &slot, &pick_value(&values, v));
    match kind % 8 {
        0 => DialogueAct::new(ActType::Inform, vec![literal]),
        1 => {
            let shared = SHARED[s as usize % 2];
            DialogueAct::new(ActType::Inform, vec![SlotFiller::relation(entity, shared, other, shared)])
        }
        2 => {
            let (slot2, values2) = pick_slot(entity, s.wrapping_add(1));
            let second = SlotFiller::literal(entity, &slot2, &pick_value(&values2, w));
            DialogueAct::new(ActType::Inform, vec![literal, second])
        }
        3 => DialogueAct::new(ActType::Request, vec![SlotFiller::bare(entity, "phone")]),
        4 => DialogueAct::new(ActType::Negate, vec![SlotFiller::negated(entity, &slot, &values[v as usize % values.len()])]),
        5 => DialogueAct::bare(ActType::Affirm),
        6 => DialogueAct::bare(ActType::Reqalts),
        _ => DialogueAct::new(ActType::Confirm, vec![literal]),
    }
}

fn system_act((kind, e, s, v, _): Pick) -> DialogueAct {
    let entity = OBJECTS[e as usize % 2];
    let (slot, values) = pick_slot(entity, s);
    match kind % 3 {
        0 => DialogueAct::new(ActType::Request, vec![SlotFiller::bare(entity, &slot)]),
        1 => DialogueAct::new(
            ActType::Confirm,
            vec![SlotFiller::literal(entity, &slot, &values[v as usize % values.len()])],
        ),
        _ => DialogueAct::hello(),
    }
}

fn pick() -> impl Strategy<Value = Pick> {
    any::<Pick>()
}

/// An n-best list of 1..=3 hypotheses with non-increasing confidences summing to `mass`.
fn observation() -> impl Strategy<Value = Observation> {
    (prop::collection::vec((pick(), 0.01f64..1.0), 1..=3), 0.05f64..=1.0).prop_map(|(hyps, mass)| {
        let mut ws: Vec<f64> = hyps.iter().map(|(_, w)| *w).collect();
        ws.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = ws.iter().sum();
        let list = hyps.iter().zip(ws).map(|((p, _), w)| (user_act(*p), w / total * mass)).collect();
        Observation::new(list).unwrap()
    })
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|mut v| {
        let total: f64 = v.iter().sum();
        if total == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|p| *p /= total);
        }
        v
    })
}

fn area_domain() -> Arc<[Label]> {
    let ty = cambridge().object_type("CamRestaurants").unwrap();
    Marginal::slot_domain(&ty.slot("area").unwrap().values)
}

fn marginal(domain: &Arc<[Label]>, probs: &[f64]) -> Marginal {
    let pairs: Vec<_> = domain.iter().cloned().zip(probs.iter().copied()).collect();
    Marginal::from_pairs(domain.clone(), &pairs).unwrap()
}

fn assert_valid(m: &Marginal, what: &str) {
    assert!(m.is_normalized(), "{what}: {:?}", m.probs());
    assert!(m.probs().iter().all(|p| (-1e-12..=1.0 + 1e-12).contains(p)), "{what}: {:?}", m.probs());
}

fn check_world(w: &ConversationalWorld) {
    for o in &w.objects {
        for (slot, m) in &o.user_goal {
            assert_valid(m, &format!("{}#{slot}", o.id));
        }
        for model in [BeliefModel::Cedm, BeliefModel::Mddm] {
            let fs = focus_state(w, &o.id, model).unwrap();
            for (slot, m) in &fs.merged {
                assert_valid(m, &format!("merged {}#{slot}", o.id));
            }
        }
    }
    for r in &w.relations {
        for (attr, m) in &r.user_goal {
            assert_valid(m, &format!("{}.{attr}", r.id));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn beliefs_stay_normalized(
        turns in prop::collection::vec((pick(), observation()), 1..8),
        cedm in any::<bool>(),
    ) {
        let model = if cedm { BeliefModel::Cedm } else { BeliefModel::Mddm };
        let mut w = world();
        for (sys, obs) in &turns {
            let sys = system_act(*sys);
            track_turn(&mut w, &sys, obs, model).unwrap();
            check_world(&w);
        }
    }
}

proptest! {
    #[test]
    fn acts_round_trip(p in pick(), sys in pick()) {
        for act in [user_act(p), system_act(sys)] {
            let text = render_act(&act);
            prop_assert_eq!(parse_act(&text).unwrap(), act, "{}", text);
        }
    }

    #[test]
    fn weighted_relation_belief_is_a_distribution(rel in distribution(2), other in distribution(7)) {
        let d = area_domain();
        prop_assume!(d.len() == 7);
        let rel = marginal(&Marginal::relation_domain(), &rel);
        let other = marginal(&d, &other);
        let b = weighted_relation_belief(&rel, &other, None).unwrap();
        assert_valid(&b, "b~");
        // NONE gains whatever the relation does not vouch for.
        let expected_none = rel.none() + rel.prob(&Label::Equals) * other.none();
        prop_assert!((b.none() - expected_none).abs() < 1e-12);
        for (label, p) in other.iter().skip(1) {
            prop_assert!((b.prob(label) - rel.prob(&Label::Equals) * p).abs() < 1e-12);
        }
    }

    #[test]
    fn context_value_replaces_related_belief(eq in 0.0f64..=1.0, other in distribution(7), v in 0usize..5) {
        let d = area_domain();
        prop_assume!(d.len() == 7);
        let value = d[2 + v].as_str().to_string();
        let rel = marginal(&Marginal::relation_domain(), &[1.0 - eq, eq]);
        let b = weighted_relation_belief(&rel, &marginal(&d, &other), Some(&value)).unwrap();
        prop_assert!((b.prob(&Label::value(&value)) - eq).abs() < 1e-12);
        prop_assert!((b.none() - (1.0 - eq)).abs() < 1e-12);
    }

    #[test]
    fn merge_falls_back_to_fresh_when_every_weight_is_zero(n in 0usize..4) {
        let d = area_domain();
        let contributions = vec![Marginal::fresh(d.clone()); n];
        let (m, conflict, weights) = merge_slot(&Marginal::fresh(d.clone()), &contributions);
        prop_assert_eq!(m, Marginal::fresh(d));
        prop_assert!(!conflict);
        prop_assert!(weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn merge_is_a_convex_combination(own in distribution(7), others in prop::collection::vec(distribution(7), 0..3)) {
        let d = area_domain();
        prop_assume!(d.len() == 7);
        let own = marginal(&d, &own);
        let others: Vec<_> = others.iter().map(|o| marginal(&d, o)).collect();
        let (m, _, weights) = merge_slot(&own, &others);
        assert_valid(&m, "merged");
        prop_assert_eq!(weights.len(), others.len() + 1);
        for (i, b) in std::iter::once(&own).chain(&others).enumerate() {
            prop_assert!((weights[i] - (1.0 - b.none())).abs() < 1e-12);
        }
        // Every merged value lies between the smallest and largest input.
        for (j, p) in m.probs().iter().enumerate() {
            let inputs: Vec<f64> = std::iter::once(&own).chain(&others).zip(&weights)
                .filter(|(_, w)| **w > 0.0).map(|(b, _)| b.probs()[j]).collect();
            if inputs.is_empty() { continue; }
            let lo = inputs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = inputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*p >= lo - 1e-12 && *p <= hi + 1e-12);
        }
    }

    /// With no own evidence for a value, the merged mass on the related object's
    /// value grows with the probability of the relation.
    #[test]
    fn relation_influence_is_monotone(
        own_none in 0.0f64..=1.0,
        other in distribution(7),
        eq_lo in 0.0f64..=1.0,
        eq_hi in 0.0f64..=1.0,
    ) {
        let d = area_domain();
        prop_assume!(d.len() == 7);
        let (eq_lo, eq_hi) = if eq_lo <= eq_hi { (eq_lo, eq_hi) } else { (eq_hi, eq_lo) };
        let own = marginal(&d, &[own_none, 1.0 - own_none, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let other = marginal(&d, &other);
        let merged_at = |eq: f64| {
            let rel = marginal(&Marginal::relation_domain(), &[1.0 - eq, eq]);
            let b = weighted_relation_belief(&rel, &other, None).unwrap();
            merge_slot(&own, &[b]).0
        };
        let (lo, hi) = (merged_at(eq_lo), merged_at(eq_hi));
        for label in d.iter().skip(2) {
            prop_assert!(hi.prob(label) >= lo.prob(label) - 1e-12, "{label}");
        }
    }

    #[test]
    fn kb_query_matches_brute_force(picks in prop::collection::vec((0u8..8, any::<u8>()), 0..4), e in 0usize..2) {
        let ontology = cambridge();
        let ty = OBJECTS[e];
        let mut constraints = BTreeMap::new();
        for (s, v) in picks {
            let (slot, values) = pick_slot(ty, s);
            constraints.insert(slot, pick_value(&values, v));
        }
        let got: Vec<&str> = query_kb(ontology, ty, &constraints).unwrap().iter().map(|r| r.name.as_str()).collect();
        let mut expected = Vec::new();
        'records: for r in ontology.kb.records(ty) {
            for (slot, value) in &constraints {
                if value != DONTCARE && r.values.get(slot) != Some(value) {
                    continue 'records;
                }
            }
            expected.push(r.name.as_str());
        }
        prop_assert_eq!(got, expected);
    }
}
