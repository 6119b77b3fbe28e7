use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length error: pad_to {pad_to} is shorter than sequence length {len}")]
    Length { len: usize, pad_to: usize },

    #[error("shape error: vectors have lengths {left} and {right}")]
    Shape { left: usize, right: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {field} at position {index}")]
    NonFinite { field: String, index: usize },

    #[error("prompt {prompt_id}: {source}")]
    Pair {
        prompt_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("missing outcome for prompt {0}")]
    MissingOutcome(String),

    #[error("percent decrease undefined: random tie rate is zero")]
    UndefinedDecrease,

    #[error("experiment id mismatch: expected {expected}, found {found}")]
    ExperimentMismatch { expected: String, found: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate prompt_id {prompt_id} (lines {first} and {second})")]
    DuplicatePrompt {
        prompt_id: String,
        first: usize,
        second: usize,
    },

    #[error("vote log corrupt: {0}")]
    CorruptLog(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_pair(prompt_id: &str, source: Error) -> Self {
        Error::Pair {
            prompt_id: prompt_id.to_string(),
            source: Box::new(source),
        }
    }
}
