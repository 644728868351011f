use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid graph: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Every sampled corruption of a triple was itself a correct triple.
    #[error("no negative found for triple ({head}, {relation}, {tail}) after {attempts} attempts")]
    CorruptionExhausted {
        head: u32,
        relation: u32,
        tail: u32,
        attempts: usize,
    },

    #[error("entity {0} never appears in training, margin is undefined")]
    UndefinedMargin(u32),

    #[error("non-finite value during training at epoch {epoch}: {what}")]
    NonFinite { epoch: usize, what: String },

    #[error("vocabulary mismatch: {what} is {found} in the model but {expected} in the graph")]
    VocabMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
