//! Entity- and relation-centric statistical dialogue management.
//!
//! The dialogue state is organised around conversational objects and the
//! relations between them. Policies are feudal GP-SARSA learners trained
//! against an agenda-based simulated user.

pub mod acts;
pub mod belief;
pub mod entities;
pub mod error;
pub mod harness;
pub mod ontology;
pub mod policy;
pub mod tracking;
pub mod usersim;

pub use error::{Error, Result};
