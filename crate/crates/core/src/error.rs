use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("negative edge weight ({0})")]
    NegativeWeight(String),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("underlying undirected graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

/// Failures raised while a simulation is running. All of them indicate either a
/// protocol bug or a violated invariant; none are expected in normal operation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("bandwidth violation: node {node} sent {count} messages to {to} in round {round} (capacity {capacity})")]
    Bandwidth { node: NodeId, to: NodeId, round: u64, count: usize, capacity: usize },
    #[error("node {node} addressed non-neighbor {to} in round {round}")]
    NoChannel { node: NodeId, to: NodeId, round: u64 },
    #[error("node {node} sent a {words}-word message in round {round} (limit 4)")]
    MessageTooLarge { node: NodeId, round: u64, words: usize },
    #[error("phase {phase} exceeded {max_rounds} rounds")]
    Timeout { phase: String, max_rounds: u64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{step}: {source}")]
    Step { step: String, source: SimError },
}

impl Error {
    pub fn step(step: &str) -> impl FnOnce(SimError) -> Error + '_ {
        move |source| match source {
            SimError::Config(msg) => Error::Config(msg),
            source => Error::Step { step: step.to_string(), source },
        }
    }
}

/// Shorthand for raising [`SimError::Invariant`].
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::SimError::Invariant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
