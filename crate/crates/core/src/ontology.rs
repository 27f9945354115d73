//! Object types, the back-end knowledge base and relation-attribute derivation.
//!
//! An ontology document is TOML with two top-level keys:
//!
//! ```toml
//! version = 1
//!
//! [[types]]
//! name = "CamHotels"
//! requestable = ["kind", "area", "pricerange", "stars", "price", "phone"]
//!
//! [[types.slots]]
//! name = "area"
//! values = ["centre", "east", "north", "south", "west"]
//! concept = "area"
//!
//! [[records.CamHotels]]
//! name = "limehouse"
//! kind = "guesthouse"
//! area = "north"
//! ```
//!
//! `types.slots` are the informable slots; `requestable` must list every
//! informable slot plus any information-only slots. `name` is implicit on
//! every record. Unknown keys are rejected everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distinguished value accepted in constraints and goals; never stored in records.
pub const DONTCARE: &str = "dontcare";
/// Slot carrying the record name.
pub const NAME_SLOT: &str = "name";
/// Reserved act-level slot naming the object type (`type="restaurant"`).
pub const TYPE_SLOT: &str = "type";
/// Relation value for the equals relation.
pub const EQUALS: &str = "equals";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotDef {
    pub name: String,
    pub values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTypeDef {
    pub name: String,
    #[serde(rename = "slots")]
    pub informable: Vec<SlotDef>,
    pub requestable: Vec<String>,
}

impl ObjectTypeDef {
    pub fn slot(&self, name: &str) -> Option<&SlotDef> {
        self.informable.iter().find(|s| s.name == name)
    }

    pub fn informable_names(&self) -> impl Iterator<Item = &str> {
        self.informable.iter().map(|s| s.name.as_str())
    }

    pub fn is_informable(&self, slot: &str) -> bool {
        self.slot(slot).is_some()
    }

    pub fn is_requestable(&self, slot: &str) -> bool {
        slot == NAME_SLOT || self.requestable.iter().any(|s| s == slot)
    }

    /// Requestable slots that are not informable (phone, address, ...).
    pub fn info_slots(&self) -> Vec<&str> {
        self.requestable
            .iter()
            .map(String::as_str)
            .filter(|s| !self.is_informable(s))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let loc = format!("types.{}", self.name);
        let mut seen = BTreeSet::new();
        for slot in &self.informable {
            let sloc = format!("{loc}.slots.{}", slot.name);
            if !seen.insert(slot.name.as_str()) {
                return Err(Error::schema(sloc, "duplicate slot"));
            }
            if slot.name == NAME_SLOT || slot.name == TYPE_SLOT {
                return Err(Error::schema(sloc, "reserved slot name"));
            }
            if slot.values.len() < 2 {
                return Err(Error::schema(sloc, "informable slot needs at least two values"));
            }
            let mut vals = BTreeSet::new();
            for v in &slot.values {
                if v == DONTCARE {
                    return Err(Error::schema(&sloc, "`dontcare` is reserved"));
                }
                if !vals.insert(v.as_str()) {
                    return Err(Error::schema(&sloc, format!("duplicate value `{v}`")));
                }
            }
            if !self.requestable.contains(&slot.name) {
                return Err(Error::schema(sloc, "informable slot missing from requestable"));
            }
        }
        let mut req = BTreeSet::new();
        for r in &self.requestable {
            if !req.insert(r.as_str()) {
                return Err(Error::schema(format!("{loc}.requestable"), format!("duplicate slot `{r}`")));
            }
        }
        Ok(())
    }
}

/// A real-world entity in the knowledge base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub name: String,
    pub values: BTreeMap<String, String>,
}

impl Record {
    pub fn get(&self, slot: &str) -> Option<&str> {
        if slot == NAME_SLOT {
            Some(&self.name)
        } else {
            self.values.get(slot).map(String::as_str)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    records: BTreeMap<String, Vec<Record>>,
}

impl KnowledgeBase {
    pub fn records(&self, ty: &str) -> &[Record] {
        self.records.get(ty).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn record_by_name(&self, ty: &str, name: &str) -> Option<&Record> {
        self.records(ty).iter().find(|r| r.name == name)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A connection between two same-concept slots of two object types.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationAttributeDef {
    pub name: String,
    pub slot_a: String,
    pub slot_b: String,
    pub relation_values: Vec<String>,
}

impl RelationAttributeDef {
    pub fn new(slot_a: &str, slot_b: &str) -> Self {
        RelationAttributeDef {
            name: format!("{slot_a}2{slot_b}"),
            slot_a: slot_a.to_string(),
            slot_b: slot_b.to_string(),
            relation_values: vec![EQUALS.to_string()],
        }
    }
}

/// Validated object types together with their knowledge base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ontology {
    pub types: Vec<ObjectTypeDef>,
    pub kb: KnowledgeBase,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    version: u32,
    types: Vec<ObjectTypeDef>,
    #[serde(default)]
    records: BTreeMap<String, Vec<toml::Table>>,
}

/// Schema shipped with the crate: CamRestaurants and CamHotels.
pub const CAMBRIDGE_SCHEMA: &str = include_str!("../data/cambridge_schema.toml");

impl Ontology {
    pub fn object_type(&self, name: &str) -> Result<&ObjectTypeDef> {
        self.types
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    /// Parses and validates an ontology document.
    pub fn from_toml_str(text: &str) -> Result<Ontology> {
        let file: OntologyFile = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "document".to_string(),
            };
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })?;
        if file.version != 1 {
            return Err(Error::schema("version", format!("unsupported version {}", file.version)));
        }
        let mut names = BTreeSet::new();
        for t in &file.types {
            if !names.insert(t.name.as_str()) {
                return Err(Error::schema(format!("types.{}", t.name), "duplicate type"));
            }
            t.validate()?;
        }
        validate_concepts(&file.types)?;

        let mut kb = KnowledgeBase::default();
        for (ty_name, rows) in &file.records {
            let ty = file
                .types
                .iter()
                .find(|t| &t.name == ty_name)
                .ok_or_else(|| Error::schema(format!("records.{ty_name}"), "records for undeclared type"))?;
            let mut parsed = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                parsed.push(parse_record(ty, row, &format!("records.{ty_name}[{i}]"))?);
            }
            kb.records.insert(ty_name.clone(), parsed);
        }
        let ontology = Ontology { types: file.types, kb };
        ontology.validate_kb()?;
        Ok(ontology)
    }

    /// Serializes to the same document format accepted by [`load_ontology`].
    pub fn to_toml_string(&self) -> String {
        let mut records = BTreeMap::new();
        for (ty, rows) in &self.kb.records {
            let tables = rows
                .iter()
                .map(|r| {
                    let mut t = toml::Table::new();
                    t.insert(NAME_SLOT.into(), toml::Value::String(r.name.clone()));
                    for (k, v) in &r.values {
                        t.insert(k.clone(), toml::Value::String(v.clone()));
                    }
                    t
                })
                .collect();
            records.insert(ty.clone(), tables);
        }
        let file = OntologyFile {
            version: 1,
            types: self.types.clone(),
            records,
        };
        toml::to_string(&file).expect("ontology serializes")
    }

    fn validate_kb(&self) -> Result<()> {
        for (ty_name, rows) in &self.kb.records {
            let mut names = BTreeSet::new();
            for (i, r) in rows.iter().enumerate() {
                if !names.insert(r.name.as_str()) {
                    return Err(Error::schema(
                        format!("records.{ty_name}[{i}].name"),
                        format!("duplicate record name `{}`", r.name),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The built-in restaurant/hotel schema with a generated knowledge base.
    pub fn cambridge(seed: u64) -> Ontology {
        let base = Ontology::from_toml_str(CAMBRIDGE_SCHEMA).expect("bundled schema is valid");
        let sizes = BTreeMap::from([("CamRestaurants".to_string(), 110), ("CamHotels".to_string(), 33)]);
        let kb = generate_kb(&base.types, seed, &sizes).expect("bundled sizes cover the schema");
        Ontology { types: base.types, kb }
    }
}

fn validate_concepts(types: &[ObjectTypeDef]) -> Result<()> {
    let mut by_concept: BTreeMap<&str, (&str, &SlotDef)> = BTreeMap::new();
    for t in types {
        for s in &t.informable {
            if let Some(c) = &s.concept {
                match by_concept.get(c.as_str()) {
                    Some((_, first)) if first.values != s.values => {
                        return Err(Error::schema(
                            format!("types.{}.slots.{}", t.name, s.name),
                            format!("concept `{c}` declared with a different value set than `{}`", first.name),
                        ));
                    }
                    Some(_) => {}
                    None => {
                        by_concept.insert(c, (&t.name, s));
                    }
                }
            }
        }
    }
    Ok(())
}

fn parse_record(ty: &ObjectTypeDef, row: &toml::Table, loc: &str) -> Result<Record> {
    let mut name = None;
    let mut values = BTreeMap::new();
    for (key, value) in row {
        let kloc = format!("{loc}.{key}");
        let text = value
            .as_str()
            .ok_or_else(|| Error::schema(&kloc, "record values must be strings"))?;
        if key == NAME_SLOT {
            name = Some(text.to_string());
            continue;
        }
        if !ty.is_requestable(key) {
            return Err(Error::schema(kloc, format!("unknown key `{key}`")));
        }
        if let Some(slot) = ty.slot(key) {
            if !slot.values.iter().any(|v| v == text) {
                return Err(Error::schema(kloc, format!("value `{text}` not declared for slot `{key}`")));
            }
        }
        values.insert(key.clone(), text.to_string());
    }
    let name = name.ok_or_else(|| Error::schema(loc, "record without name"))?;
    for slot in &ty.informable {
        if !values.contains_key(&slot.name) {
            return Err(Error::schema(format!("{loc}.{}", slot.name), "missing informable slot"));
        }
    }
    Ok(Record { name, values })
}

/// Reads and validates an ontology + knowledge-base document.
pub fn load_ontology(path: impl AsRef<Path>) -> Result<Ontology> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ontology::from_toml_str(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}:{location}", path.display()),
            message,
        },
        other => other,
    })
}

/// One attribute per pair of informable slots sharing a concept tag, sorted by name.
pub fn derive_relations(type_a: &ObjectTypeDef, type_b: &ObjectTypeDef) -> Vec<RelationAttributeDef> {
    let mut out = Vec::new();
    for sa in &type_a.informable {
        let Some(ca) = &sa.concept else { continue };
        for sb in &type_b.informable {
            if sb.concept.as_ref() == Some(ca) {
                out.push(RelationAttributeDef::new(&sa.name, &sb.name));
            }
        }
    }
    out.sort();
    out
}

/// Records of `ty` satisfying every constraint; `dontcare` matches anything.
pub fn query_kb<'a>(
    ontology: &'a Ontology,
    ty: &str,
    constraints: &BTreeMap<String, String>,
) -> Result<Vec<&'a Record>> {
    let def = ontology.object_type(ty)?;
    for slot in constraints.keys() {
        if !def.is_requestable(slot) {
            return Err(Error::UnknownSlot {
                ty: ty.to_string(),
                slot: slot.clone(),
            });
        }
    }
    Ok(ontology
        .kb
        .records(ty)
        .iter()
        .filter(|r| record_matches(r, constraints))
        .collect())
}

pub fn record_matches(record: &Record, constraints: &BTreeMap<String, String>) -> bool {
    constraints
        .iter()
        .all(|(slot, value)| value == DONTCARE || record.get(slot) == Some(value.as_str()))
}

/// Slots whose concept tag is shared with some slot of any type; these are the
/// slots relation-constrained goals rely on.
pub fn relation_relevant_slots<'a>(ty: &'a ObjectTypeDef, all: &[ObjectTypeDef]) -> Vec<&'a SlotDef> {
    ty.informable
        .iter()
        .filter(|s| {
            let Some(c) = &s.concept else { return false };
            all.iter()
                .flat_map(|t| t.informable.iter().map(move |o| (t, o)))
                .any(|(t, o)| o.concept.as_ref() == Some(c) && !(t.name == ty.name && o.name == s.name))
        })
        .collect()
}

const NAME_HEADS: &[&str] = &[
    "golden", "red", "old", "little", "royal", "silver", "blue", "green", "grand", "lucky", "jade", "crown",
    "white", "copper", "hidden", "bridge", "river", "market", "garden", "kings", "queens", "station", "castle",
    "meadow",
];
const NAME_TAILS: &[&str] = &[
    "lion", "oak", "house", "lotus", "anchor", "swan", "bell", "star", "lantern", "willow", "court", "rose",
    "eagle", "fig", "harbour", "mill", "orchard", "spire", "tavern", "lodge", "kitchen", "table", "gate",
    "arms",
];
const STREETS: &[&str] = &["regent", "hills", "mill", "trumpington", "chesterton", "newmarket", "histon", "king"];

/// Deterministic synthetic knowledge base over the given schema.
///
/// For every type, each combination of relation-relevant slot values receives
/// at least one record; remaining records are drawn uniformly.
pub fn generate_kb(types: &[ObjectTypeDef], seed: u64, sizes: &BTreeMap<String, usize>) -> Result<KnowledgeBase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::default();
    for ty in types {
        let Some(&size) = sizes.get(&ty.name) else { continue };
        if size == 0 {
            return Err(Error::KbTooSmall(format!("size for `{}` must be positive", ty.name)));
        }
        let relevant = relation_relevant_slots(ty, types);
        let combos = cartesian(&relevant);
        if combos.len() > size {
            return Err(Error::KbTooSmall(format!(
                "`{}` needs at least {} records to cover its related slot values, got {size}",
                ty.name,
                combos.len()
            )));
        }
        let mut used_names = BTreeSet::new();
        let mut rows = Vec::with_capacity(size);
        for i in 0..size {
            let mut values = BTreeMap::new();
            for slot in &ty.informable {
                let v = slot.values.choose(&mut rng).expect("non-empty values").clone();
                values.insert(slot.name.clone(), v);
            }
            if let Some(combo) = combos.get(i) {
                for (slot, v) in combo {
                    values.insert(slot.clone(), v.clone());
                }
            }
            for info in ty.info_slots() {
                values.insert(info.to_string(), info_value(info, &mut rng));
            }
            let name = loop {
                let head = NAME_HEADS.choose(&mut rng).expect("non-empty");
                let tail = NAME_TAILS.choose(&mut rng).expect("non-empty");
                let mut candidate = format!("the {head} {tail}");
                if used_names.contains(&candidate) {
                    candidate = format!("{candidate} {}", rng.random_range(2..100));
                }
                if used_names.insert(candidate.clone()) {
                    break candidate;
                }
            };
            rows.push(Record { name, values });
        }
        rows.sort_by(|a, b| a.name.cmp(&b.name));
        kb.records.insert(ty.name.clone(), rows);
    }
    Ok(kb)
}

fn cartesian(slots: &[&SlotDef]) -> Vec<Vec<(String, String)>> {
    let mut out: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for slot in slots {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                slot.values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((slot.name.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    out
}

fn info_value(slot: &str, rng: &mut impl Rng) -> String {
    match slot {
        "phone" => format!("01223 {:06}", rng.random_range(0..1_000_000)),
        "postcode" => format!("cb{} {}{}", rng.random_range(1..6), rng.random_range(1..10), ["ab", "dp", "ql", "rh"][rng.random_range(0..4)]),
        "address" => format!("{} {} road", rng.random_range(1..200), STREETS.choose(rng).expect("non-empty")),
        "price" => {
            let single = rng.random_range(3..9) * 10 - 5 * rng.random_range(0..2);
            let double = single + rng.random_range(2..5) * 10;
            format!("a cheapest single room is {single} pounds and a cheapest double room is {double} pounds")
        }
        _ => format!("{slot} {}", rng.random_range(1..1000)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cambridge_types() -> Vec<ObjectTypeDef> {
        Ontology::from_toml_str(CAMBRIDGE_SCHEMA).unwrap().types
    }

    #[test]
    fn hotel_restaurant_relations() {
        let types = cambridge_types();
        let (rest, hotel) = (&types[0], &types[1]);
        let names: Vec<_> = derive_relations(hotel, rest).into_iter().map(|r| r.name).collect();
        assert_eq!(names, ["area2area", "pricerange2pricerange"]);
    }

    #[test]
    fn no_shared_concepts_gives_no_relations() {
        let types = cambridge_types();
        let mut bare = types[0].clone();
        for s in &mut bare.informable {
            s.concept = None;
        }
        assert!(derive_relations(&types[0], &bare).is_empty());
    }

    #[test]
    fn same_type_sharing_area_only() {
        let mut t = cambridge_types()[0].clone();
        for s in &mut t.informable {
            if s.name != "area" {
                s.concept = None;
            }
        }
        let names: Vec<_> = derive_relations(&t, &t).into_iter().map(|r| r.name).collect();
        assert_eq!(names, ["area2area"]);
    }

    #[test]
    fn undeclared_value_is_rejected() {
        let doc = r#"
version = 1
[[types]]
name = "R"
requestable = ["area"]
[[types.slots]]
name = "area"
values = ["north", "south"]
[[records.R]]
name = "x"
area = "mars"
"#;
        match Ontology::from_toml_str(doc) {
            Err(Error::Schema { location, .. }) => assert_eq!(location, "records.R[0].area"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = "version = 1\ncolour = 3\n[[types]]\nname = \"R\"\nrequestable = []\nslots = []\n";
        assert!(matches!(Ontology::from_toml_str(doc), Err(Error::Parse { .. })));
        let doc = "version = 1\n[[types]]\nname = \"R\"\nrequestable = [\"a\"]\n[[types.slots]]\nname = \"a\"\nvalues = [\"x\", \"y\"]\nweight = 2\n";
        assert!(matches!(Ontology::from_toml_str(doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn duplicate_slot_is_rejected() {
        let doc = "version = 1\n[[types]]\nname = \"R\"\nrequestable = [\"a\"]\n[[types.slots]]\nname = \"a\"\nvalues = [\"x\", \"y\"]\n[[types.slots]]\nname = \"a\"\nvalues = [\"x\", \"y\"]\n";
        assert!(matches!(Ontology::from_toml_str(doc), Err(Error::Schema { .. })));
    }

    #[test]
    fn generated_kb_is_deterministic_and_seed_dependent() {
        let types = cambridge_types();
        let sizes = BTreeMap::from([("CamRestaurants".to_string(), 110), ("CamHotels".to_string(), 33)]);
        let a = generate_kb(&types, 1, &sizes).unwrap();
        let b = generate_kb(&types, 1, &sizes).unwrap();
        assert_eq!(a, b);
        let c = generate_kb(&types, 2, &sizes).unwrap();
        let names = |kb: &KnowledgeBase| kb.records("CamHotels").iter().map(|r| r.name.clone()).collect::<Vec<_>>();
        assert_ne!(names(&a), names(&c));
    }

    #[test]
    fn too_small_sizes_fail() {
        let types = cambridge_types();
        let sizes = BTreeMap::from([("CamHotels".to_string(), 5)]);
        assert!(matches!(generate_kb(&types, 1, &sizes), Err(Error::KbTooSmall(_))));
    }

    #[test]
    fn generated_kb_round_trips_through_the_document_format() {
        let onto = Ontology::cambridge(4);
        let again = Ontology::from_toml_str(&onto.to_toml_string()).unwrap();
        assert_eq!(onto, again);
    }

    #[test]
    fn unknown_type_and_slot_in_query() {
        let onto = Ontology::cambridge(1);
        assert!(matches!(query_kb(&onto, "Pubs", &BTreeMap::new()), Err(Error::UnknownType(_))));
        let c = BTreeMap::from([("colour".to_string(), "red".to_string())]);
        assert!(matches!(query_kb(&onto, "CamHotels", &c), Err(Error::UnknownSlot { .. })));
    }
}
