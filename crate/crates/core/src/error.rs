use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no completed tasks")]
    NoCompletedTasks,

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("all fairness counts are zero")]
    AllZeroCounts,

    #[error("task {0} already has a split decision")]
    DecisionAlreadySet(u64),

    #[error("task {0} has no split decision")]
    MissingDecision(u64),

    #[error("no workload profile for application {0}")]
    UnknownApp(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("container overflow: {count} containers exceed the encoding cap of {cap}")]
    ContainerOverflow { count: usize, cap: usize },

    #[error("input dimension mismatch: got {got}, network expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error("training buffer is empty")]
    EmptyBuffer,

    #[error("non-finite surrogate parameter after training step {0}")]
    NonFiniteParameters(usize),

    #[error("environment is past its horizon ({0} intervals)")]
    PastHorizon(u32),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
