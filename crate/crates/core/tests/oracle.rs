mod common;

use congest_apsp::csssp::Direction;
use congest_apsp::oracle::{dijkstra_apsp, dijkstra_with_hops, h_hop_distances, h_hop_distances_dir, min_plus_closure};
use congest_apsp::{Distance, NodeId};
use proptest::prelude::*;

#[test]
fn p3_examples() {
    let g = common::gnp(3, 0.0, 1, false, 0);
    // with p = 0 the generator only adds the joining edges
    let d = dijkstra_apsp(&g);
    assert_eq!(d.get(NodeId(1), NodeId(1)), Distance::ZERO);
    let (_, hops) = dijkstra_with_hops(&g, NodeId(1), Direction::Out);
    assert_eq!(hops[0], Some(0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hop_bounded_distances_shrink_to_dijkstra(g in common::small_graph(16)) {
        let full = dijkstra_apsp(&g);
        for s in g.nodes() {
            let mut prev = h_hop_distances(&g, s, 0);
            for h in 1..g.n() {
                let cur = h_hop_distances(&g, s, h);
                prop_assert!(cur.iter().zip(&prev).all(|(a, b)| a <= b));
                prev = cur;
            }
            prop_assert_eq!(&prev[..], full.row(s));
        }
    }

    #[test]
    fn in_direction_is_the_column(g in common::small_graph(14)) {
        let full = dijkstra_apsp(&g);
        for t in g.nodes() {
            let (col, _) = dijkstra_with_hops(&g, t, Direction::In);
            for x in g.nodes() {
                prop_assert_eq!(col[x.index()], full.get(x, t));
            }
            let h = h_hop_distances_dir(&g, t, g.n() - 1, Direction::In);
            prop_assert_eq!(h, col);
        }
    }

    #[test]
    fn closure_is_idempotent(cells in proptest::collection::vec(proptest::option::of(0u64..20), 25)) {
        let m: Vec<Vec<Distance>> = (0..5)
            .map(|a| (0..5).map(|b| if a == b { Distance::ZERO } else { cells[a * 5 + b].map_or(Distance::INF, Distance::finite) }).collect())
            .collect();
        let c = min_plus_closure(&m);
        prop_assert_eq!(min_plus_closure(&c), c.clone());
        for a in 0..5 { for b in 0..5 { prop_assert!(c[a][b] <= m[a][b]); } }
    }
}
