//! Replays the two transcribed example dialogues through tracker and evaluator.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use cedm::acts::{ActType, SlotFiller};
use cedm::belief::Label;
use cedm::entities::{new_world, ConversationalWorld};
use cedm::harness::{replay, Transcript};
use cedm::ontology::{Ontology, CAMBRIDGE_SCHEMA, DONTCARE};
use cedm::policy::{to_master_act, ObjectAction, SummaryAction};
use cedm::tracking::{focus_state, BeliefModel};
use cedm::usersim::{evaluate_success, ObjectGoal, UserGoal};

const HOTEL: &str = "CamHotels";
const RESTAURANT: &str = "CamRestaurants";
const REL: &str = "CamHotels-CamRestaurants";

fn ontology() -> Ontology {
    let text = format!("{CAMBRIDGE_SCHEMA}\n{}", include_str!("fixtures/appendix_records.toml"));
    Ontology::from_toml_str(&text).unwrap()
}

fn world(ontology: &Ontology) -> ConversationalWorld {
    let types: Vec<_> = [HOTEL, RESTAURANT]
        .iter()
        .map(|t| (t.to_string(), Arc::new(ontology.object_type(t).unwrap().clone())))
        .collect();
    new_world(&types).unwrap()
}

fn goal(object: &str, constraints: &[(&str, &str)], requests: &[&str]) -> ObjectGoal {
    ObjectGoal {
        object: object.into(),
        constraints: constraints.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
        requests: requests.iter().map(|s| s.to_string()).collect(),
    }
}

fn area_top(world: &ConversationalWorld, model: BeliefModel) -> Label {
    focus_state(world, RESTAURANT, model).unwrap().merged["area"].argmax().0.clone()
}

fn filler_set(fillers: &[SlotFiller]) -> BTreeSet<String> {
    fillers.iter().map(|f| format!("{f:?}")).collect()
}

#[test]
fn conflict_resolution_dialogue_replays_and_succeeds() {
    let ontology = ontology();
    let mut w = world(&ontology);
    let transcript = Transcript::parse(include_str!("fixtures/conflict_resolution.dialogue")).unwrap();
    assert_eq!(transcript.turns.len(), 21);

    let mut checked = 0;
    let outcome = replay(&mut w, &ontology, &transcript, BeliefModel::Cedm, |i, w| match i {
        // The relation reference resolves to the hotel's offered area.
        13 => {
            let rel = w.relation(REL).unwrap();
            assert!(rel.active);
            assert_eq!(rel.user_goal["area2area"].prob(&Label::Equals), 1.0);
            assert_eq!(area_top(w, BeliefModel::Cedm), Label::value("north"));
            checked += 1;
        }
        // The user insists on west: own belief and relation now disagree.
        15 => {
            let fs = focus_state(w, RESTAURANT, BeliefModel::Cedm).unwrap();
            assert!(fs.conflicts["area"]);
            assert!(fs.conflict);
            checked += 1;
        }
        // Rejecting the relation leaves the object's own value.
        17 => {
            let rel = w.relation(REL).unwrap();
            assert_eq!(rel.user_goal["area2area"].prob(&Label::Equals), 0.0);
            let fs = focus_state(w, RESTAURANT, BeliefModel::Cedm).unwrap();
            assert!(!fs.conflict);
            assert_eq!(fs.merged["area"].argmax().0, &Label::value("west"));
            checked += 1;
        }
        _ => {}
    })
    .unwrap();
    assert_eq!(checked, 3);
    assert_eq!(outcome.exchanges, BTreeMap::from([(HOTEL.to_string(), 5), (RESTAURANT.to_string(), 5)]));

    let goal = UserGoal {
        objects: vec![
            goal(
                HOTEL,
                &[("kind", "guesthouse"), ("pricerange", "moderate"), ("area", "north"), ("stars", DONTCARE)],
                &["price"],
            ),
            goal(RESTAURANT, &[("food", "british"), ("pricerange", "moderate"), ("area", "west")], &[]),
        ],
        relations: BTreeSet::from([(REL.to_string(), "area2area".to_string())]),
    };
    let success = evaluate_success(&goal, &ontology, &w, &outcome.system_acts);
    assert_eq!(success, BTreeMap::from([(HOTEL.to_string(), true), (RESTAURANT.to_string(), true)]));
}

#[test]
fn system_turns_match_the_renderer() {
    // Re-render the restaurant's system turns from the tracked state just before them.
    let ontology = ontology();
    let transcript = Transcript::parse(include_str!("fixtures/conflict_resolution.dialogue")).unwrap();
    let cases = [
        (14, SummaryAction::Object(ObjectAction::InformByConstraints)),
        (
            16,
            SummaryAction::ConfirmRel {
                relation: REL.into(),
                attribute: "area2area".into(),
            },
        ),
        (18, SummaryAction::Object(ObjectAction::InformByConstraints)),
    ];
    for (turn, action) in cases {
        let mut w = world(&ontology);
        let prefix = Transcript {
            turns: transcript.turns[..turn].to_vec(),
        };
        replay(&mut w, &ontology, &prefix, BeliefModel::Cedm, |_, _| {}).unwrap();
        let fs = focus_state(&w, RESTAURANT, BeliefModel::Cedm).unwrap();
        let rendered = to_master_act(&action, &w, &ontology, &fs).unwrap();
        let expected = &transcript.turns[turn].1;
        assert_eq!(rendered.act_type, expected.act_type, "turn {turn}");
        if expected.act_type == ActType::Confirm {
            assert_eq!(&rendered, expected);
        } else {
            assert_eq!(filler_set(&rendered.fillers), filler_set(&expected.fillers), "turn {turn}");
        }
    }
}

#[test]
fn baseline_dialogue_repeats_then_succeeds() {
    let ontology = ontology();
    let mut w = world(&ontology);
    let transcript = Transcript::parse(include_str!("fixtures/baseline_repetition.dialogue")).unwrap();
    assert_eq!(transcript.turns.len(), 17);

    let mut seen = Vec::new();
    let outcome = replay(&mut w, &ontology, &transcript, BeliefModel::Mddm, |i, w| {
        if [7, 9, 11, 13].contains(&i) {
            seen.push(area_top(w, BeliefModel::Mddm));
        }
    })
    .unwrap();
    // Three relation references leave the area unknown; the literal fills it.
    assert_eq!(seen, vec![Label::None, Label::None, Label::None, Label::value("north")]);
    assert!(!w.relation(REL).unwrap().active);
    assert_eq!(outcome.exchanges, BTreeMap::from([(HOTEL.to_string(), 3), (RESTAURANT.to_string(), 5)]));

    let goal = UserGoal {
        objects: vec![
            goal(
                HOTEL,
                &[("kind", "hotel"), ("pricerange", DONTCARE), ("area", "north"), ("stars", "2")],
                &[],
            ),
            goal(RESTAURANT, &[("food", "chinese"), ("pricerange", "expensive"), ("area", "north")], &[]),
        ],
        relations: BTreeSet::from([(REL.to_string(), "area2area".to_string())]),
    };
    let success = evaluate_success(&goal, &ontology, &w, &outcome.system_acts);
    assert_eq!(success, BTreeMap::from([(HOTEL.to_string(), true), (RESTAURANT.to_string(), true)]));
}

#[test]
fn relation_model_resolves_the_first_reference() {
    let ontology = ontology();
    let mut w = world(&ontology);
    let transcript = Transcript::parse(include_str!("fixtures/baseline_repetition.dialogue")).unwrap();
    let prefix = Transcript {
        turns: transcript.turns[..8].to_vec(),
    };
    replay(&mut w, &ontology, &prefix, BeliefModel::Cedm, |_, _| {}).unwrap();
    assert_eq!(area_top(&w, BeliefModel::Cedm), Label::value("north"));
    assert_eq!(w.relation(REL).unwrap().user_goal["area2area"].prob(&Label::Equals), 1.0);
}
