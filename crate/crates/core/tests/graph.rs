mod common;

use congest_apsp::graph::{generate_graph, parse_dimacs, parse_json, underlying_undirected};
use congest_apsp::{Edge, GenSpec, Graph, GraphError, NodeId};
use proptest::prelude::*;

fn components(g: &Graph) -> usize {
    let u = underlying_undirected(g);
    let mut seen = vec![false; g.n()];
    let mut count = 0;
    for s in 0..g.n() {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![NodeId::from_index(s)];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for &w in u.channels(v) {
                if !seen[w.index()] {
                    seen[w.index()] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

#[test]
fn generator_families() {
    let g = generate_graph(&GenSpec::parse("grid:3x4").unwrap(), 0).unwrap();
    assert_eq!((g.n(), g.edges().len()), (12, 17));
    let s = generate_graph(&GenSpec::parse("star:5:2:directed").unwrap(), 0).unwrap();
    assert!(s.is_directed());
    assert_eq!(s.edges().len(), 4);
    assert!(GenSpec::parse("gnp:5:1.5:3").is_err());
    assert!(GenSpec::parse("cycle:2").is_err());
}

#[test]
fn rejects_bad_graphs() {
    let e = |u, v| Edge { src: NodeId(u), dst: NodeId(v), weight: 1 };
    assert!(matches!(Graph::new(4, false, vec![e(1, 2), e(3, 4)]), Err(GraphError::Disconnected { components: 2 })));
    assert!(Graph::new(2, false, vec![e(1, 3)]).is_err());
    assert!(Graph::new(2, false, vec![e(1, 1)]).is_err());
    assert!(parse_dimacs("p sp 2 1\na 1 2 -3\n", true).is_err());
    assert!(matches!(parse_json("{\"n\": 2"), Err(GraphError::Parse { .. })));
}

#[test]
fn dimacs_detects_symmetric_arcs() {
    let text = "c two arcs\np sp 2 2\na 1 2 4\na 2 1 4\n";
    assert!(!parse_dimacs(text, false).unwrap().is_directed());
    assert!(parse_dimacs(text, true).unwrap().is_directed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_are_connected(g in common::small_graph(30)) {
        prop_assert_eq!(components(&g), 1);
    }

    #[test]
    fn json_round_trip(g in common::small_graph(20)) {
        prop_assert_eq!(parse_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn dimacs_round_trip_keeps_arcs(g in common::small_graph(20)) {
        let back = parse_dimacs(&g.to_dimacs(), g.is_directed()).unwrap();
        for e in g.edges() {
            prop_assert_eq!(back.weight(e.src, e.dst), Some(e.weight));
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let spec = GenSpec::parse("gnp:12:0.3:8:directed").unwrap();
        prop_assert_eq!(generate_graph(&spec, seed).unwrap(), generate_graph(&spec, seed).unwrap());
    }
}
