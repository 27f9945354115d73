//! Marginal distributions over attribute values.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{DONTCARE, EQUALS};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A value an attribute marginal ranges over.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    /// No information shared yet.
    None,
    DontCare,
    Equals,
    Value(String),
}

impl Label {
    pub fn value(v: &str) -> Label {
        match v {
            DONTCARE => Label::DontCare,
            _ => Label::Value(v.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Label::None => "NONE",
            Label::DontCare => DONTCARE,
            Label::Equals => EQUALS,
            Label::Value(v) => v,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Label::None)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probability distribution over a fixed label domain. The first label of
/// every domain is [`Label::None`].
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    labels: Arc<[Label]>,
    probs: Vec<f64>,
}

impl Marginal {
    /// Domain `{NONE, DONTCARE, values...}` for an informable slot.
    pub fn slot_domain(values: &[String]) -> Arc<[Label]> {
        let mut labels = vec![Label::None, Label::DontCare];
        labels.extend(values.iter().map(|v| Label::Value(v.clone())));
        labels.into()
    }

    /// Domain `{NONE, EQUALS}` for a relation attribute.
    pub fn relation_domain() -> Arc<[Label]> {
        vec![Label::None, Label::Equals].into()
    }

    /// All mass on NONE.
    pub fn fresh(labels: Arc<[Label]>) -> Marginal {
        assert!(labels.first() == Some(&Label::None), "domain must start with NONE");
        let mut probs = vec![0.0; labels.len()];
        probs[0] = 1.0;
        Marginal { labels, probs }
    }

    /// Builds a marginal from explicit probabilities; unlisted labels get zero.
    pub fn from_pairs(labels: Arc<[Label]>, pairs: &[(Label, f64)]) -> Result<Marginal> {
        let mut m = Marginal {
            probs: vec![0.0; labels.len()],
            labels,
        };
        for (l, p) in pairs {
            let i = m.index_of(l)?;
            m.probs[i] = *p;
        }
        Ok(m)
    }

    /// Point mass on `label`.
    pub fn degenerate(labels: Arc<[Label]>, label: &Label) -> Result<Marginal> {
        Marginal::from_pairs(labels, &[(label.clone(), 1.0)])
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn domain(&self) -> Arc<[Label]> {
        self.labels.clone()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, f64)> {
        self.labels.iter().zip(self.probs.iter().copied())
    }

    pub fn index_of(&self, label: &Label) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownValue {
            attribute: "marginal".into(),
            value: label.to_string(),
        })
    }

    pub fn prob(&self, label: &Label) -> f64 {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn none(&self) -> f64 {
        self.probs[0]
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= NORMALIZATION_TOLERANCE && self.probs.iter().all(|p| *p >= 0.0)
    }

    pub(crate) fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    /// Highest-probability label other than NONE. Ties go to the earlier label
    /// in domain order.
    pub fn top_non_none(&self) -> Option<(&Label, f64)> {
        let mut best: Option<(&Label, f64)> = None;
        for (l, p) in self.iter().skip(1) {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((l, p));
            }
        }
        best
    }

    /// Highest-probability label over the whole domain, NONE included.
    pub fn argmax(&self) -> (&Label, f64) {
        let mut best = (&self.labels[0], self.probs[0]);
        for (l, p) in self.iter().skip(1) {
            if p > best.1 {
                best = (l, p);
            }
        }
        best
    }

    /// Top and second probabilities among proper values (neither NONE nor DONTCARE).
    pub fn top_two_values(&self) -> (f64, f64) {
        let mut top = 0.0;
        let mut second = 0.0;
        for (l, p) in self.iter() {
            if matches!(l, Label::Value(_) | Label::Equals) {
                if p > top {
                    second = top;
                    top = p;
                } else if p > second {
                    second = p;
                }
            }
        }
        (top, second)
    }

    /// `label:prob` pairs with non-zero mass at four decimal places.
    pub fn snapshot(&self) -> String {
        let parts: Vec<String> = self
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(l, p)| format!("{l}:{p:.4}"))
            .collect();
        format!("[{}]", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_has_all_mass_on_none() {
        let m = Marginal::fresh(Marginal::slot_domain(&["a".into(), "b".into()]));
        assert_eq!(m.none(), 1.0);
        assert!(m.is_normalized());
        assert_eq!(m.snapshot(), "[NONE:1.0000]");
    }

    #[test]
    fn top_ties_go_to_domain_order() {
        let d = Marginal::slot_domain(&["north".into(), "west".into()]);
        let m = Marginal::from_pairs(d, &[(Label::value("west"), 0.5), (Label::value("north"), 0.5)]).unwrap();
        assert_eq!(m.top_non_none().unwrap().0, &Label::value("north"));
        assert_eq!(m.top_two_values(), (0.5, 0.5));
    }

    #[test]
    fn unknown_label_is_an_error() {
        let d = Marginal::relation_domain();
        assert!(Marginal::from_pairs(d, &[(Label::value("x"), 1.0)]).is_err());
    }
}
