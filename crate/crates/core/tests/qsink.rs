mod common;

use congest_apsp::blocker::{Mode, Params};
use congest_apsp::csssp::{build_csssp, Direction, TreeCollection};
use congest_apsp::engine::{EngineConfig, Sim};
use congest_apsp::oracle::dijkstra_with_hops;
use congest_apsp::qsink::{compute_bottleneck, compute_count, route, run_qsink, QSinkInput, QSinkParams, Resolved, Schedule};
use congest_apsp::{Distance, Graph, NodeId};
use proptest::prelude::*;

fn pick(g: &Graph, mask: u64) -> Vec<NodeId> {
    let q: Vec<NodeId> = g.nodes().filter(|v| mask >> (v.index() % 64) & 1 == 1).collect();
    if q.is_empty() { vec![NodeId(1)] } else { q }
}

fn in_trees<'g>(g: &'g Graph, q: &[NodeId], hops: u32) -> (Sim<'g>, TreeCollection) {
    let mut sim = Sim::new(g, EngineConfig::default());
    let t = build_csssp(&mut sim, q, hops, Direction::In).unwrap();
    (sim, t)
}

fn columns(g: &Graph, q: &[NodeId]) -> Vec<Vec<Distance>> {
    let cols: Vec<Vec<Distance>> = q.iter().map(|&c| dijkstra_with_hops(g, c, Direction::In).0).collect();
    (0..g.n()).map(|x| cols.iter().map(|c| c[x]).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_are_subtree_sizes(g in common::small_graph(16), mask in any::<u64>(), hops in 1u32..5) {
        let q = pick(&g, mask);
        let hops = hops.min(g.n() as u32 - 1);
        let (mut sim, trees) = in_trees(&g, &q, hops);
        let count = compute_count(&mut sim, &trees).unwrap();
        for (k, tree) in trees.trees().iter().enumerate() {
            for v in g.nodes() {
                let size = tree.members().filter(|&w| tree.path_from_root(w).contains(&v)).count() as u64;
                prop_assert_eq!(count[v.index()][k], size);
            }
        }
    }

    #[test]
    fn bottleneck_postconditions(g in common::small_graph(16), mask in any::<u64>(), threshold in 1u64..30) {
        let q = pick(&g, mask);
        let hops = 3.min(g.n() as u32 - 1);
        let (mut sim, mut trees) = in_trees(&g, &q, hops);
        let total = trees.total_size() as u64;
        let b = compute_bottleneck(&mut sim, &mut trees, threshold).unwrap();
        let count = compute_count(&mut sim, &trees).unwrap();
        prop_assert!(count.iter().all(|row| row.iter().sum::<u64>() <= threshold));
        prop_assert!(b.nodes.len() as u64 <= total.div_ceil(threshold));
        prop_assert_eq!(b.initial_total, total);
    }

    #[test]
    fn schedules_deliver_the_same_messages(g in common::small_graph(18), mask in any::<u64>(), log in 1u64..4, threshold in 4u64..60) {
        let q = pick(&g, mask);
        let hops = 3.min(g.n() as u32 - 1);
        let params = Resolved { hops, threshold, log, stage_cap: 8 };
        let values = columns(&g, &q);
        let mut got = Vec::new();
        for schedule in [Schedule::Plain, Schedule::Staged] {
            let (mut sim, mut trees) = in_trees(&g, &q, hops);
            compute_bottleneck(&mut sim, &mut trees, threshold).unwrap();
            let counts = compute_count(&mut sim, &trees).unwrap();
            got.push(route(&mut sim, &trees, &values, &counts, &params, schedule).unwrap().received);
        }
        prop_assert_eq!(&got[0], &got[1]);
    }

    #[test]
    fn every_blocker_node_ends_with_its_column(g in common::small_graph(18), mask in any::<u64>(), hops in 1u32..4, threshold in proptest::option::of(3u64..40)) {
        let q = pick(&g, mask);
        let hops = hops.min(g.n() as u32 - 1);
        let to_q = columns(&g, &q);
        let params = QSinkParams { hops: Some(hops), threshold, log: None };
        let input = QSinkInput {
            q: &q,
            to_q: &to_q,
            params: &params,
            blocker: &Params::default(),
            mode: Mode::Deterministic,
            schedule: Schedule::Staged,
            check: true,
        };
        let mut sim = Sim::new(&g, EngineConfig::default());
        let out = run_qsink(&mut sim, &input).unwrap();
        for (k, _) in q.iter().enumerate() {
            for x in 0..g.n() {
                prop_assert_eq!(out.known[k][x], to_q[x][k]);
            }
        }
    }
}

#[test]
fn leaf_value_leaves_in_first_frame() {
    // 1 → 2 → 3 with 3 the only blocker node
    let g = common::gnp(3, 0.0, 1, true, 0);
    let q = [NodeId(3)];
    let (mut sim, trees) = in_trees(&g, &q, 2);
    if trees.trees()[0].size() == 3 {
        let counts = compute_count(&mut sim, &trees).unwrap();
        let params = Resolved { hops: 2, threshold: 10, log: 1, stage_cap: 3 };
        let d = route(&mut sim, &trees, &columns(&g, &q), &counts, &params, Schedule::Staged).unwrap();
        assert_eq!(d.stages[0].max_qvi, 1);
        assert_eq!(d.received[0].len(), 2);
    }
}
