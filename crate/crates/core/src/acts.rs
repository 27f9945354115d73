//! Semantic dialogue acts shared by the system and the user.
//!
//! Grammar (whitespace between tokens is ignored):
//!
//! ```text
//! act     := acttype "(" [ filler ( "," filler )* ] ")"
//! filler  := qslot                      -- bare slot (request)
//!          | qslot "=" string           -- literal, "dontcare" is the dontcare value
//!          | qslot "!=" string          -- negated literal
//!          | qslot "=" qslot            -- relation reference
//! qslot   := ident "#" ident
//! string  := '"' ( [^"\\] | '\\"' | '\\\\' )* '"'
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::DONTCARE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActType {
    Hello,
    Inform,
    Request,
    Confirm,
    Select,
    Reqalts,
    Negate,
    Affirm,
    Bye,
}

impl ActType {
    pub const ALL: [ActType; 9] = [
        ActType::Hello,
        ActType::Inform,
        ActType::Request,
        ActType::Confirm,
        ActType::Select,
        ActType::Reqalts,
        ActType::Negate,
        ActType::Affirm,
        ActType::Bye,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActType::Hello => "hello",
            ActType::Inform => "inform",
            ActType::Request => "request",
            ActType::Confirm => "confirm",
            ActType::Select => "select",
            ActType::Reqalts => "reqalts",
            ActType::Negate => "negate",
            ActType::Affirm => "affirm",
            ActType::Bye => "bye",
        }
    }

    pub fn parse(s: &str) -> Option<ActType> {
        ActType::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

/// `entity#slot`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QualifiedSlot {
    pub entity: String,
    pub slot: String,
}

impl QualifiedSlot {
    pub fn new(entity: impl Into<String>, slot: impl Into<String>) -> Self {
        QualifiedSlot {
            entity: entity.into(),
            slot: slot.into(),
        }
    }
}

impl fmt::Display for QualifiedSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.entity, self.slot)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FillerValue {
    Literal(String),
    Dontcare,
    Relation(QualifiedSlot),
    Negated(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotFiller {
    pub slot: QualifiedSlot,
    pub value: Option<FillerValue>,
}

impl SlotFiller {
    pub fn bare(entity: &str, slot: &str) -> Self {
        SlotFiller {
            slot: QualifiedSlot::new(entity, slot),
            value: None,
        }
    }

    pub fn literal(entity: &str, slot: &str, value: &str) -> Self {
        let value = if value == DONTCARE {
            FillerValue::Dontcare
        } else {
            FillerValue::Literal(value.to_string())
        };
        SlotFiller {
            slot: QualifiedSlot::new(entity, slot),
            value: Some(value),
        }
    }

    pub fn negated(entity: &str, slot: &str, value: &str) -> Self {
        SlotFiller {
            slot: QualifiedSlot::new(entity, slot),
            value: Some(FillerValue::Negated(value.to_string())),
        }
    }

    pub fn relation(entity: &str, slot: &str, other_entity: &str, other_slot: &str) -> Self {
        SlotFiller {
            slot: QualifiedSlot::new(entity, slot),
            value: Some(FillerValue::Relation(QualifiedSlot::new(other_entity, other_slot))),
        }
    }

    pub fn is_relation(&self) -> bool {
        matches!(self.value, Some(FillerValue::Relation(_)))
    }

    /// Literal value or `dontcare`, if this filler carries one.
    pub fn literal_value(&self) -> Option<&str> {
        match &self.value {
            Some(FillerValue::Literal(v)) => Some(v),
            Some(FillerValue::Dontcare) => Some(DONTCARE),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DialogueAct {
    pub act_type: ActType,
    pub fillers: Vec<SlotFiller>,
}

impl DialogueAct {
    pub fn new(act_type: ActType, fillers: Vec<SlotFiller>) -> Self {
        DialogueAct { act_type, fillers }
    }

    pub fn bare(act_type: ActType) -> Self {
        DialogueAct::new(act_type, Vec::new())
    }

    pub fn hello() -> Self {
        DialogueAct::bare(ActType::Hello)
    }

    pub fn bye() -> Self {
        DialogueAct::bare(ActType::Bye)
    }

    pub fn has_relation(&self) -> bool {
        self.fillers.iter().any(SlotFiller::is_relation)
    }

    /// Structural well-formedness: requests carry bare slots only, hello/bye
    /// carry nothing, bare slots only appear in requests.
    pub fn validate(&self) -> Result<()> {
        match self.act_type {
            ActType::Hello | ActType::Bye if !self.fillers.is_empty() => Err(Error::InvalidAct(format!(
                "{}() takes no slot fillers",
                self.act_type.as_str()
            ))),
            ActType::Request if self.fillers.iter().any(|f| f.value.is_some()) => {
                Err(Error::InvalidAct("request carries slot names without values".into()))
            }
            ActType::Request => Ok(()),
            _ if self.fillers.iter().any(|f| f.value.is_none()) => Err(Error::InvalidAct(format!(
                "bare slot in {}()",
                self.act_type.as_str()
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_act(self))
    }
}

impl std::str::FromStr for DialogueAct {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_act(s)
    }
}

fn quote(out: &mut String, v: &str) {
    out.push('"');
    for c in v.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

pub fn render_act(act: &DialogueAct) -> String {
    let mut out = String::new();
    out.push_str(act.act_type.as_str());
    out.push('(');
    for (i, filler) in act.fillers.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&filler.slot.to_string());
        match &filler.value {
            None => {}
            Some(FillerValue::Literal(v)) => {
                out.push('=');
                quote(&mut out, v);
            }
            Some(FillerValue::Dontcare) => {
                out.push('=');
                quote(&mut out, DONTCARE);
            }
            Some(FillerValue::Negated(v)) => {
                out.push_str("!=");
                quote(&mut out, v);
            }
            Some(FillerValue::Relation(other)) => {
                out.push('=');
                out.push_str(&other.to_string());
            }
        }
    }
    out.push(')');
    out
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::ActSyntax {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            self.err(format!("expected `{token}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return self.err("expected identifier");
        }
        Ok(&self.src[start..self.pos])
    }

    fn qslot(&mut self) -> Result<QualifiedSlot> {
        let entity = self.ident()?;
        if !self.src[self.pos..].starts_with('#') {
            return self.err("expected `#` in qualified slot");
        }
        self.pos += 1;
        let slot = self.ident()?;
        Ok(QualifiedSlot::new(entity, slot))
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        if self.peek() != Some('"') {
            return self.err("expected string literal");
        }
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return self.err("unterminated string literal"),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c @ ('"' | '\\')) => {
                            out.push(c);
                            self.pos += 1;
                        }
                        _ => return self.err("invalid escape"),
                    }
                }
                Some(c) => {
                    out.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
    }

    fn filler(&mut self) -> Result<SlotFiller> {
        let slot = self.qslot()?;
        let value = if self.eat("!=") {
            Some(FillerValue::Negated(self.string()?))
        } else if self.eat("=") {
            self.skip_ws();
            if self.peek() == Some('"') {
                let v = self.string()?;
                Some(if v == DONTCARE {
                    FillerValue::Dontcare
                } else {
                    FillerValue::Literal(v)
                })
            } else {
                Some(FillerValue::Relation(self.qslot()?))
            }
        } else {
            None
        };
        Ok(SlotFiller { slot, value })
    }
}

/// Parses one act; errors carry the byte offset of the failure.
pub fn parse_act(text: &str) -> Result<DialogueAct> {
    let mut p = Parser { src: text, pos: 0 };
    let name_pos = {
        p.skip_ws();
        p.pos
    };
    let name = p.ident()?;
    let act_type = match ActType::parse(name) {
        Some(a) => a,
        None => {
            return Err(Error::ActSyntax {
                pos: name_pos,
                message: format!("unknown act type `{name}`"),
            })
        }
    };
    p.expect("(")?;
    let mut fillers = Vec::new();
    if !p.eat(")") {
        loop {
            fillers.push(p.filler()?);
            if p.eat(")") {
                break;
            }
            p.expect(",")?;
        }
    }
    p.skip_ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    let act = DialogueAct { act_type, fillers };
    act.validate().map_err(|e| Error::ActSyntax {
        pos: text.len(),
        message: e.to_string(),
    })?;
    Ok(act)
}

/// An n-best list of act hypotheses with confidences.
///
/// Confidences are non-negative, non-increasing and sum to at most one; the
/// remainder is the probability that the turn carried no usable input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    hypotheses: Vec<(DialogueAct, f64)>,
}

impl Observation {
    pub fn new(hypotheses: Vec<(DialogueAct, f64)>) -> Result<Self> {
        let mut total = 0.0;
        let mut prev = f64::INFINITY;
        for (_, c) in &hypotheses {
            if !(*c >= 0.0) || *c > prev {
                return Err(Error::InvalidEvidence(
                    "confidences must be non-negative and non-increasing".into(),
                ));
            }
            prev = *c;
            total += c;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidEvidence(format!("confidences sum to {total}")));
        }
        Ok(Observation { hypotheses })
    }

    pub fn certain(act: DialogueAct) -> Self {
        Observation {
            hypotheses: vec![(act, 1.0)],
        }
    }

    pub fn hypotheses(&self) -> &[(DialogueAct, f64)] {
        &self.hypotheses
    }

    pub fn top(&self) -> Option<&DialogueAct> {
        self.hypotheses.first().map(|(a, _)| a)
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn total_confidence(&self) -> f64 {
        self.hypotheses.iter().map(|(_, c)| c).sum()
    }
}

/// Which part of the conversational world an act is about.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Addressee {
    /// Greeting and closing acts.
    World,
    /// Content-free entity-level acts (`reqalts()`, `affirm()`, ...) that
    /// refer to whatever is currently in focus.
    Focus,
    Object(String),
    /// A relation act; `object` is the object being discussed (left-hand side).
    Relation { id: String, object: String },
}

/// Entity lookup used to resolve acts against a world.
pub trait EntityDirectory {
    fn has_object(&self, id: &str) -> bool;
    fn relation_between(&self, a: &str, b: &str) -> Option<String>;
}

pub fn addressed_entity_of(act: &DialogueAct, world: &impl EntityDirectory) -> Result<Addressee> {
    if matches!(act.act_type, ActType::Hello | ActType::Bye) {
        return Ok(Addressee::World);
    }
    let mut object: Option<&str> = None;
    let mut relation: Option<String> = None;
    for filler in &act.fillers {
        let e = filler.slot.entity.as_str();
        if !world.has_object(e) {
            return Err(Error::UnknownEntity(e.to_string()));
        }
        match object {
            Some(o) if o != e => {
                return Err(Error::InvalidAct(format!("act addresses both `{o}` and `{e}`")));
            }
            _ => object = Some(e),
        }
        if let Some(FillerValue::Relation(other)) = &filler.value {
            if !world.has_object(&other.entity) {
                return Err(Error::UnknownEntity(other.entity.clone()));
            }
            let id = world
                .relation_between(e, &other.entity)
                .ok_or_else(|| Error::InvalidAct(format!("no relation between `{e}` and `{}`", other.entity)))?;
            match &relation {
                Some(r) if r != &id => return Err(Error::InvalidAct("act addresses two relations".into())),
                _ => relation = Some(id),
            }
        }
    }
    Ok(match (object, relation) {
        (None, _) => Addressee::Focus,
        (Some(o), Some(id)) => Addressee::Relation { id, object: o.to_string() },
        (Some(o), None) => Addressee::Object(o.to_string()),
    })
}
