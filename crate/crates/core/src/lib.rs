//! Deterministic CONGEST-model simulation of a blocker-set based all-pairs
//! shortest paths algorithm, with sequential oracles for every stage.
//!
//! The pipeline lives in [`pipeline::run_apsp`]; the pieces it is built from
//! (hop-bounded Bellman-Ford trees, blocker-set selection, derandomized sampling,
//! the q-sink routing step) are usable on their own.

pub mod blocker;
pub mod csssp;
pub mod derand;
pub mod engine;
pub mod error;
pub mod fraction;
pub mod graph;
pub mod oracle;
pub mod pipeline;
pub mod qsink;

pub use error::{Error, GraphError, SimError};
pub use graph::{Distance, Edge, GenSpec, Graph, NodeId, Weight};
pub use pipeline::{run_apsp, PipelineConfig};
