use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or unparsable. `key` names the offending knob.
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("cannot split a dataset with an odd row count ({0})")]
    OddRowCount(usize),

    #[error("operation requires an unordered geometry")]
    OrderedGeometry,

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("infeasible prior: {0}")]
    InfeasiblePrior(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
