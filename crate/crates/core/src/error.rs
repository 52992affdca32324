use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out-of-range transition at (s={s}, a={a}, w={w}): target {target} but only {num_states} states")]
    TransitionOutOfRange {
        s: usize,
        a: usize,
        w: usize,
        target: i64,
        num_states: usize,
    },
    #[error("non-finite reward at (s={s}, a={a}, w={w})")]
    NonFiniteReward { s: usize, a: usize, w: usize },
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("table size mismatch in {field}: expected {expected} entries, found {found}")]
    TableSize {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("lookahead depth must be at least 1")]
    ZeroLookahead,
    #[error("lookahead depth {k} must be smaller than the horizon {horizon}")]
    HorizonTooShort { k: usize, horizon: usize },
    #[error("augmented state space too large: {0}")]
    StateSpaceTooLarge(String),
    #[error("controller horizon of {horizon} steps exhausted")]
    HorizonExhausted { horizon: usize },
    #[error("controller protocol violation: {0}")]
    Protocol(String),
    #[error("enumeration guard exceeded: {leaves} leaves > limit {limit}")]
    GuardExceeded { leaves: u128, limit: u128 },
    #[error("invalid disturbance distribution: {0}")]
    InvalidDistribution(String),
    #[error("disturbance sequence is empty")]
    EmptySequence,
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
