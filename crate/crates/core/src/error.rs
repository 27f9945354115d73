use thiserror::Error;

/// Errors raised across the dialogue framework.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("unknown object type `{0}`")]
    UnknownType(String),
    #[error("unknown slot `{slot}` for type `{ty}`")]
    UnknownSlot { ty: String, slot: String },
    #[error("unknown value `{value}` for attribute `{attribute}`")]
    UnknownValue { attribute: String, value: String },
    #[error("act syntax error at byte {pos}: {message}")]
    ActSyntax { pos: usize, message: String },
    #[error("invalid act: {0}")]
    InvalidAct(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("record `{record}` is of type `{expected}`, not `{actual}`")]
    TypeMismatch {
        record: String,
        expected: String,
        actual: String,
    },
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
    #[error("marginal `{0}` is not normalized")]
    Unnormalized(String),
    #[error("observation addressed to `{actual}` passed to tracker of `{expected}`")]
    MisroutedObservation { expected: String, actual: String },
    #[error("summary dimension {actual} does not match learner dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("focus is empty")]
    EmptyFocus,
    #[error("knowledge base too small: {0}")]
    KbTooSmall(String),
    #[error("could not sample a satisfiable goal after {0} attempts")]
    Unsatisfiable(usize),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }
}
