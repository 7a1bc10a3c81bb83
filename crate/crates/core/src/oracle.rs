//! Sequential ground truth. Nothing here simulates communication; these are the
//! references every distributed result is compared against.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use crate::csssp::{Direction, TreeCollection};
use crate::graph::{Distance, Graph, NodeId};

/// Row-major `n × n` table; entry `(u, v)` is the distance from `u` to `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<Distance>,
}

impl DistanceMatrix {
    pub fn new(n: usize) -> DistanceMatrix {
        let mut data = vec![Distance::INF; n * n];
        for i in 0..n {
            data[i * n + i] = Distance::ZERO;
        }
        DistanceMatrix { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<Distance>>) -> DistanceMatrix {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        DistanceMatrix { n, data: rows.into_iter().flatten().collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: NodeId, v: NodeId) -> Distance {
        self.data[u.index() * self.n + v.index()]
    }

    pub fn set(&mut self, u: NodeId, v: NodeId, d: Distance) {
        self.data[u.index() * self.n + v.index()] = d;
    }

    pub fn row(&self, u: NodeId) -> &[Distance] {
        &self.data[u.index() * self.n..(u.index() + 1) * self.n]
    }

    /// One line per source, comma separated, `inf` for unreachable.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for u in 0..self.n {
            let row = &self.data[u * self.n..(u + 1) * self.n];
            let cells: Vec<String> = row.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// First differing entry, if any.
    pub fn first_mismatch(&self, other: &DistanceMatrix) -> Option<(NodeId, NodeId, Distance, Distance)> {
        assert_eq!(self.n, other.n);
        (0..self.n * self.n).find(|&k| self.data[k] != other.data[k]).map(|k| {
            (NodeId::from_index(k / self.n), NodeId::from_index(k % self.n), self.data[k], other.data[k])
        })
    }
}

fn neighbors(g: &Graph, v: NodeId, dir: Direction) -> &[(NodeId, u64)] {
    match dir {
        Direction::Out => g.out_edges(v),
        Direction::In => g.in_edges(v),
    }
}

/// Dijkstra from `s` following edges forward (`Out`) or backward (`In`).
/// Returns the distance and the fewest hops among shortest paths.
pub fn dijkstra_with_hops(g: &Graph, s: NodeId, dir: Direction) -> (Vec<Distance>, Vec<Option<u32>>) {
    let n = g.n();
    let mut dist = vec![Distance::INF; n];
    let mut hops: Vec<Option<u32>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[s.index()] = Distance::ZERO;
    hops[s.index()] = Some(0);
    heap.push(Reverse((0u64, 0u32, s)));
    let mut done = vec![false; n];
    while let Some(Reverse((d, k, v))) = heap.pop() {
        if done[v.index()] {
            continue;
        }
        done[v.index()] = true;
        for &(w, wt) in neighbors(g, v, dir) {
            let cand = (d + wt, k + 1);
            let cur = (dist[w.index()], hops[w.index()].unwrap_or(u32::MAX));
            if (Distance::finite(cand.0), cand.1) < cur {
                dist[w.index()] = Distance::finite(cand.0);
                hops[w.index()] = Some(cand.1);
                heap.push(Reverse((cand.0, cand.1, w)));
            }
        }
    }
    (dist, hops)
}

pub fn dijkstra_apsp(g: &Graph) -> DistanceMatrix {
    let rows = g.nodes().map(|s| dijkstra_with_hops(g, s, Direction::Out).0).collect();
    DistanceMatrix::from_rows(rows)
}

/// `δ_h(s, ·)`: minimum weight over paths of at most `h` edges.
pub fn h_hop_distances(g: &Graph, s: NodeId, h: usize) -> Vec<Distance> {
    h_hop_distances_dir(g, s, h, Direction::Out)
}

pub fn h_hop_distances_dir(g: &Graph, s: NodeId, h: usize, dir: Direction) -> Vec<Distance> {
    let mut cur = vec![Distance::INF; g.n()];
    cur[s.index()] = Distance::ZERO;
    for _ in 0..h {
        let mut next = cur.clone();
        let mut changed = false;
        for v in g.nodes() {
            let dv = cur[v.index()];
            if !dv.is_finite() {
                continue;
            }
            for &(w, wt) in neighbors(g, v, dir) {
                let cand = dv.plus(wt);
                if cand < next[w.index()] {
                    next[w.index()] = cand;
                    changed = true;
                }
            }
        }
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

/// Root-to-node paths ending at a node of depth exactly `h`, one per such node,
/// in collection order.
pub fn depth_h_paths(trees: &TreeCollection, h: u32) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    for tree in trees.trees() {
        for v in tree.members() {
            if tree.get(v).is_some_and(|e| e.depth == h) {
                out.push(tree.path_from_root(v));
            }
        }
    }
    out
}

pub fn count_paths_through(trees: &TreeCollection, h: u32, v: NodeId) -> u64 {
    depth_h_paths(trees, h).iter().filter(|p| p.contains(&v)).count() as u64
}

/// Number of depth-`h` paths that avoid every node of `q`.
pub fn uncovered_paths(trees: &TreeCollection, h: u32, q: &[NodeId]) -> usize {
    let q: BTreeSet<NodeId> = q.iter().copied().collect();
    depth_h_paths(trees, h).iter().filter(|p| !p.iter().any(|v| q.contains(v))).count()
}

/// Greedy cover of the depth-`h` paths: repeatedly take the node on the most
/// uncovered paths, lowest id on ties.
pub fn greedy_blocker(trees: &TreeCollection, h: u32) -> Vec<NodeId> {
    let n = trees.n();
    let mut paths = depth_h_paths(trees, h);
    let mut chosen = Vec::new();
    while !paths.is_empty() {
        let mut count = vec![0usize; n];
        for p in &paths {
            for v in p {
                count[v.index()] += 1;
            }
        }
        let best = (0..n).max_by_key(|&i| (count[i], Reverse(i))).expect("nonempty");
        let pick = NodeId::from_index(best);
        chosen.push(pick);
        paths.retain(|p| !p.contains(&pick));
    }
    chosen
}

/// Min-plus transitive closure (Floyd-Warshall).
pub fn min_plus_closure(m: &[Vec<Distance>]) -> Vec<Vec<Distance>> {
    let k = m.len();
    let mut d: Vec<Vec<Distance>> = m.to_vec();
    for mid in 0..k {
        for a in 0..k {
            let dam = d[a][mid];
            if !dam.is_finite() {
                continue;
            }
            for b in 0..k {
                let cand = dam.add(d[mid][b]);
                if cand < d[a][b] {
                    d[a][b] = cand;
                }
            }
        }
    }
    d
}
