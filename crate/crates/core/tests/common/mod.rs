#![allow(dead_code)]

use congest_apsp::graph::generate_graph;
use congest_apsp::{GenSpec, Graph};
use proptest::prelude::*;

pub fn gnp(n: usize, p: f64, wmax: u64, directed: bool, seed: u64) -> Graph {
    generate_graph(&GenSpec::Gnp { n, p, wmax, directed }, seed).expect("valid generator")
}

/// Small connected random graphs, zero weights included.
pub fn small_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..=max_n, 0.15f64..0.6, 0u64..=8, any::<bool>(), any::<u64>())
        .prop_map(|(n, p, wmax, directed, seed)| gnp(n, p, wmax, directed, seed))
}
