//! Hop-bounded Bellman-Ford trees, the truncated tree collection built from
//! them, and the per-tree passes (subtree removal, ancestor lists, root-to-leaf
//! and leaf-to-root aggregation) the blocker and routing steps run on it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Message, NodeProgram, Outbox, Sim};
use crate::error::{ensure, GraphError, SimError};
use crate::graph::{Distance, Graph, NodeId, Weight};
use crate::oracle;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Paths leave the root.
    Out,
    /// Paths enter the root.
    In,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TreeEntry {
    pub parent: Option<NodeId>,
    /// Number of tree edges between the node and the root.
    pub depth: u32,
    pub dist: Distance,
    /// Hop count of the path the distance label was derived from.
    pub hops: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    root: NodeId,
    entries: Vec<Option<TreeEntry>>,
}

impl Tree {
    pub fn new(root: NodeId, n: usize) -> Tree {
        let mut entries = vec![None; n];
        entries[root.index()] = Some(TreeEntry { parent: None, depth: 0, dist: Distance::ZERO, hops: 0 });
        Tree { root, entries }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn get(&self, v: NodeId) -> Option<&TreeEntry> {
        self.entries[v.index()].as_ref()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.entries[v.index()].is_some()
    }

    pub fn set(&mut self, v: NodeId, e: Option<TreeEntry>) {
        self.entries[v.index()] = e;
    }

    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().enumerate().filter(|(_, e)| e.is_some()).map(|(i, _)| NodeId::from_index(i))
    }

    pub fn size(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    /// Children of every member, ascending.
    pub fn children(&self) -> Vec<Vec<NodeId>> {
        let mut ch = vec![Vec::new(); self.entries.len()];
        for v in self.members() {
            if let Some(p) = self.entries[v.index()].and_then(|e| e.parent) {
                ch[p.index()].push(v);
            }
        }
        ch
    }

    /// Tree path from the root to `v`, inclusive.
    pub fn path_from_root(&self, v: NodeId) -> Vec<NodeId> {
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.get(cur).and_then(|e| e.parent) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeCollection {
    n: usize,
    direction: Direction,
    hop_bound: u32,
    trees: Vec<Tree>,
}

impl TreeCollection {
    pub fn new(n: usize, direction: Direction, hop_bound: u32, trees: Vec<Tree>) -> TreeCollection {
        TreeCollection { n, direction, hop_bound, trees }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn hop_bound(&self) -> u32 {
        self.hop_bound
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn trees_mut(&mut self) -> &mut [Tree] {
        &mut self.trees
    }

    pub fn sources(&self) -> Vec<NodeId> {
        self.trees.iter().map(|t| t.root).collect()
    }

    pub fn tree_of(&self, source: NodeId) -> Option<&Tree> {
        self.trees.iter().find(|t| t.root == source)
    }

    pub fn total_size(&self) -> usize {
        self.trees.iter().map(Tree::size).sum()
    }

    /// `{source: {node: {parent, depth, dist}}}`
    pub fn to_json(&self) -> String {
        let doc: BTreeMap<u32, BTreeMap<u32, EntryJson>> = self
            .trees
            .iter()
            .map(|t| {
                let nodes = t
                    .members()
                    .map(|v| {
                        let e = t.get(v).expect("member");
                        (v.0, EntryJson { parent: e.parent.map(|p| p.0), depth: e.depth, dist: e.dist })
                    })
                    .collect();
                (t.root.0, nodes)
            })
            .collect();
        serde_json::to_string(&doc).expect("tree json")
    }

    /// Parses a dump produced by [`TreeCollection::to_json`], checking that every
    /// tree is rooted, parent-closed and depth-consistent.
    pub fn from_json(text: &str, n: usize, direction: Direction, hop_bound: u32) -> Result<TreeCollection, GraphError> {
        let bad = |msg: String| GraphError::Invalid(format!("tree dump: {msg}"));
        let doc: BTreeMap<u32, BTreeMap<u32, EntryJson>> =
            serde_json::from_str(text).map_err(|e| GraphError::Parse { line: e.line(), msg: e.to_string() })?;
        let in_range = |v: u32| v >= 1 && (v as usize) <= n;
        let mut trees = Vec::new();
        for (root, nodes) in doc {
            if !in_range(root) {
                return Err(bad(format!("source {root} out of range")));
            }
            let mut tree = Tree { root: NodeId(root), entries: vec![None; n] };
            for (&v, e) in &nodes {
                if !in_range(v) {
                    return Err(bad(format!("node {v} out of range")));
                }
                let parent = match e.parent {
                    Some(p) if !in_range(p) || p == v => return Err(bad(format!("bad parent {p} of {v}"))),
                    p => p.map(NodeId),
                };
                if (parent.is_none()) != (v == root) {
                    return Err(bad(format!("only the root {root} may lack a parent (node {v})")));
                }
                if e.depth > hop_bound {
                    return Err(bad(format!("node {v} deeper than {hop_bound}")));
                }
                tree.entries[v as usize - 1] = Some(TreeEntry { parent, depth: e.depth, dist: e.dist, hops: e.depth });
            }
            match tree.get(tree.root) {
                Some(e) if e.depth == 0 => {}
                _ => return Err(bad(format!("tree {root} lacks its root at depth 0"))),
            }
            for v in tree.members() {
                let e = tree.get(v).expect("member");
                if let Some(p) = e.parent {
                    match tree.get(p) {
                        Some(pe) if pe.depth + 1 == e.depth => {}
                        _ => return Err(bad(format!("node {v} in tree {root}: parent {p} missing or depth mismatch"))),
                    }
                }
            }
            trees.push(tree);
        }
        Ok(TreeCollection { n, direction, hop_bound, trees })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryJson {
    parent: Option<u32>,
    depth: u32,
    dist: Distance,
}

/// Channel over which a relaxation travels, and the weight it adds.
fn relax_targets(g: &Graph, v: NodeId, dir: Direction) -> Vec<NodeId> {
    let adj = match dir {
        Direction::Out => g.out_edges(v),
        Direction::In => g.in_edges(v),
    };
    adj.iter().map(|&(w, _)| w).collect()
}

fn incoming_weight(g: &Graph, me: NodeId, from: NodeId, dir: Direction) -> Weight {
    match dir {
        Direction::Out => g.weight(from, me),
        Direction::In => g.weight(me, from),
    }
    .expect("relaxation arrived over an existing edge")
}

/// `(dist, hops, predecessor)`, compared lexicographically.
type Key = (Distance, u32, Option<NodeId>);

impl Message for (Distance, u32) {
    fn words(&self) -> usize {
        2
    }
}

struct BellmanFord<'g> {
    g: &'g Graph,
    me: NodeId,
    dir: Direction,
    is_source: bool,
    budget: u64,
    key: Option<Key>,
    round: u64,
}

impl NodeProgram for BellmanFord<'_> {
    type Msg = (Distance, u32);

    fn step(&mut self, round: u64, inbox: &[(NodeId, (Distance, u32))], out: &mut Outbox<(Distance, u32)>) {
        self.round = round;
        let mut changed = false;
        if round == 1 && self.is_source {
            self.key = Some((Distance::ZERO, 0, None));
            changed = true;
        }
        for &(from, (d, k)) in inbox {
            let cand = (d.plus(incoming_weight(self.g, self.me, from, self.dir)), k + 1, Some(from));
            if self.key.is_none_or(|cur| cand < cur) {
                self.key = Some(cand);
                changed = true;
            }
        }
        if changed && round <= self.budget {
            let (d, k, _) = self.key.expect("set");
            for w in relax_targets(self.g, self.me, self.dir) {
                out.send(w, (d, k));
            }
        }
    }

    fn is_done(&self) -> bool {
        self.round > self.budget
    }
}

/// Runs `hops` rounds of Bellman-Ford from each source in turn. Depths in the
/// result are the chain depths of the final parent pointers.
pub fn bellman_ford(sim: &mut Sim, sources: &[NodeId], hops: u32, dir: Direction) -> Result<TreeCollection, SimError> {
    let g = sim.graph();
    let mut trees = Vec::with_capacity(sources.len());
    for &s in sources {
        let mut progs: Vec<BellmanFord> = g
            .nodes()
            .map(|me| BellmanFord { g, me, dir, is_source: me == s, budget: hops as u64, key: None, round: 0 })
            .collect();
        let rounds = sim.run("bellman-ford", &mut progs, Some(hops as u64 + 1))?;
        ensure!(rounds == hops as u64, "bellman-ford from {s} ran {rounds} rounds instead of {hops}");
        let mut tree = Tree { root: s, entries: vec![None; g.n()] };
        for (i, p) in progs.iter().enumerate() {
            if let Some((dist, k, parent)) = p.key {
                tree.entries[i] = Some(TreeEntry { parent, depth: 0, dist, hops: k });
            }
        }
        fill_chain_depths(&mut tree);
        trees.push(tree);
    }
    Ok(TreeCollection { n: g.n(), direction: dir, hop_bound: hops, trees })
}

fn fill_chain_depths(tree: &mut Tree) {
    let n = tree.entries.len();
    let mut depth: Vec<Option<u32>> = vec![None; n];
    for v in 0..n {
        let mut chain = Vec::new();
        let mut cur = v;
        while depth[cur].is_none() {
            match tree.entries[cur] {
                Some(e) => {
                    chain.push(cur);
                    match e.parent {
                        Some(p) => cur = p.index(),
                        None => {
                            depth[cur] = Some(0);
                            chain.pop();
                            break;
                        }
                    }
                }
                None => break,
            }
        }
        let mut d = depth[cur].unwrap_or(0);
        while let Some(u) = chain.pop() {
            d += 1;
            depth[u] = Some(d);
        }
    }
    for (e, d) in tree.entries.iter_mut().zip(depth) {
        if let (Some(e), Some(d)) = (e.as_mut(), d) {
            e.depth = d;
        }
    }
}

#[derive(Clone, Debug)]
enum Trunc {
    Depth(u32),
    ChildAck,
}

impl Message for Trunc {
    fn words(&self) -> usize {
        2
    }
}

struct Truncate<'g> {
    g: &'g Graph,
    me: NodeId,
    parent: Option<NodeId>,
    is_root: bool,
    limit: u32,
    depth: Option<u32>,
    acks: usize,
}

impl NodeProgram for Truncate<'_> {
    type Msg = Trunc;

    fn step(&mut self, round: u64, inbox: &[(NodeId, Trunc)], out: &mut Outbox<Trunc>) {
        let mut joined = None;
        if round == 1 && self.is_root {
            joined = Some(0);
        }
        for (from, m) in inbox {
            match m {
                Trunc::ChildAck => self.acks += 1,
                Trunc::Depth(d) if self.depth.is_none() && Some(*from) == self.parent => joined = Some(d + 1),
                Trunc::Depth(_) => {}
            }
        }
        if let Some(d) = joined {
            self.depth = Some(d);
            for &w in self.g.channels(self.me) {
                if Some(w) == self.parent {
                    out.send(w, Trunc::ChildAck);
                } else if d < self.limit {
                    out.send(w, Trunc::Depth(d));
                }
            }
        }
    }

    fn is_done(&self) -> bool {
        !self.is_root || self.depth.is_some()
    }
}

/// Keeps the first `h` levels of each `2h`-hop Bellman-Ford tree. Besides the
/// cut, the pass tells every parent which neighbors are its children.
pub fn build_csssp(sim: &mut Sim, sources: &[NodeId], h: u32, dir: Direction) -> Result<TreeCollection, SimError> {
    ensure!(h >= 1, "tree collection needs h >= 1");
    let mut trees = bellman_ford(sim, sources, 2 * h, dir)?;
    let g = sim.graph();
    for tree in &mut trees.trees {
        let mut progs: Vec<Truncate> = g
            .nodes()
            .map(|me| Truncate {
                g,
                me,
                parent: tree.get(me).and_then(|e| e.parent),
                is_root: me == tree.root,
                limit: h,
                depth: None,
                acks: 0,
            })
            .collect();
        let rounds = sim.run("truncate", &mut progs, None)?;
        ensure!(rounds <= h as u64 + 1, "truncation of tree {} took {rounds} rounds", tree.root);
        for (i, p) in progs.iter().enumerate() {
            match (p.depth, &mut tree.entries[i]) {
                (Some(d), Some(e)) if d <= h => {
                    ensure!(d == e.depth, "distributed depth {d} disagrees with chain depth {}", e.depth);
                }
                (_, slot) => *slot = None,
            }
        }
    }
    trees.hop_bound = h;
    Ok(trees)
}

/// Cross-tree consistency findings; these are reported, never fatal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConsistencyReport {
    pub below_node_conflicts: usize,
    pub above_node_conflicts: usize,
    pub examples: Vec<String>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.below_node_conflicts == 0 && self.above_node_conflicts == 0
    }
}

/// Hard checks on a collection built by [`build_csssp`]: labels equal the
/// `2h`-hop distances, parent links are real edges that never undercut the
/// label, and every node whose shortest path from the root needs at most `h`
/// hops is present with its true distance.
pub fn verify_csssp(g: &Graph, trees: &TreeCollection) -> Result<(), SimError> {
    let h = trees.hop_bound;
    for tree in &trees.trees {
        let x = tree.root;
        let bounded = oracle::h_hop_distances_dir(g, x, 2 * h as usize, trees.direction);
        let (exact, min_hops) = oracle::dijkstra_with_hops(g, x, trees.direction);
        for v in tree.members() {
            let e = tree.get(v).expect("member");
            ensure!(e.depth <= h, "tree {x}: node {v} at depth {} > {h}", e.depth);
            ensure!(
                e.dist == bounded[v.index()],
                "tree {x}: node {v} has label {} but the {}-hop distance is {}",
                e.dist,
                2 * h,
                bounded[v.index()]
            );
            if let Some(p) = e.parent {
                let pe = tree.get(p);
                ensure!(pe.is_some_and(|pe| pe.depth + 1 == e.depth), "tree {x}: node {v} has a detached parent {p}");
                let w = match trees.direction {
                    Direction::Out => g.weight(p, v),
                    Direction::In => g.weight(v, p),
                };
                ensure!(w.is_some(), "tree {x}: parent link {p}-{v} is not an edge");
                ensure!(
                    e.dist >= pe.expect("checked").dist.plus(w.expect("checked")),
                    "tree {x}: node {v} label undercuts its parent {p}"
                );
            }
        }
        for v in g.nodes() {
            if let (true, Some(k)) = (exact[v.index()].is_finite(), min_hops[v.index()]) {
                if k <= h {
                    let got = tree.get(v).map(|e| e.dist);
                    ensure!(
                        got == Some(exact[v.index()]),
                        "tree {x}: node {v} reachable by a {k}-hop shortest path but holds {got:?}"
                    );
                }
            }
        }
    }
    Ok(())
}

/// Checks that, for every node `c`, the trees agree on how to continue below
/// `c` and on how to reach `c` from their roots.
pub fn consistency_report(trees: &TreeCollection) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let children: Vec<Vec<Vec<NodeId>>> = trees.trees.iter().map(Tree::children).collect();
    for c in (0..trees.n).map(NodeId::from_index) {
        let mut below: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut above: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for (t, tree) in trees.trees.iter().enumerate() {
            if !tree.contains(c) {
                continue;
            }
            let mut stack = vec![c];
            while let Some(u) = stack.pop() {
                for &w in &children[t][u.index()] {
                    if *below.entry(w).or_insert(u) != u {
                        report.below_node_conflicts += 1;
                        if report.examples.len() < 8 {
                            report.examples.push(format!("below {c}: node {w} has two parents"));
                        }
                    }
                    stack.push(w);
                }
            }
            let path = tree.path_from_root(c);
            for pair in path.windows(2) {
                if *above.entry(pair[0]).or_insert(pair[1]) != pair[1] {
                    report.above_node_conflicts += 1;
                    if report.examples.len() < 8 {
                        report.examples.push(format!("above {c}: node {} continues two ways", pair[0]));
                    }
                }
            }
        }
    }
    report
}

struct Remove {
    children: Vec<NodeId>,
    member: bool,
    seed: bool,
    started: bool,
}

impl NodeProgram for Remove {
    type Msg = u64;

    fn step(&mut self, _round: u64, inbox: &[(NodeId, u64)], out: &mut Outbox<u64>) {
        let trigger = (self.seed && !self.started) || !inbox.is_empty();
        self.started = true;
        if trigger && self.member {
            self.member = false;
            for &c in &self.children {
                out.send(c, 0);
            }
        }
    }

    fn is_done(&self) -> bool {
        !self.seed || self.started
    }
}

/// Detaches every node of `z` together with everything below it, in every tree.
pub fn remove_subtrees(sim: &mut Sim, trees: &mut TreeCollection, z: &[NodeId]) -> Result<(), SimError> {
    let h = trees.hop_bound as u64;
    for tree in &mut trees.trees {
        if !z.iter().any(|&v| tree.contains(v)) {
            continue;
        }
        let children = tree.children();
        let mut progs: Vec<Remove> = (0..tree.entries.len())
            .map(|i| Remove {
                children: children[i].clone(),
                member: tree.entries[i].is_some(),
                seed: z.contains(&NodeId::from_index(i)) && tree.entries[i].is_some(),
                started: false,
            })
            .collect();
        let rounds = sim.run("remove-subtrees", &mut progs, None)?;
        ensure!(rounds <= h, "subtree removal in tree {} took {rounds} rounds", tree.root);
        for (i, p) in progs.iter().enumerate() {
            if !p.member {
                tree.entries[i] = None;
            }
        }
    }
    Ok(())
}

struct Ancestors {
    me: NodeId,
    children: Vec<NodeId>,
    depth: Option<u32>,
    list: Vec<NodeId>,
    own_pending: bool,
}

impl NodeProgram for Ancestors {
    type Msg = (u64, u64);

    fn step(&mut self, _round: u64, inbox: &[(NodeId, (u64, u64))], out: &mut Outbox<(u64, u64)>) {
        let Some(depth) = self.depth else { return };
        let mut to_send = None;
        for &(_, (k, id)) in inbox {
            debug_assert_eq!(k as usize, self.list.len());
            self.list.push(NodeId(id as u32));
            to_send = Some((k, id));
            if k + 1 == depth as u64 {
                self.own_pending = true;
            }
        }
        if to_send.is_none() && self.own_pending {
            self.own_pending = false;
            self.list.push(self.me);
            to_send = Some((depth as u64, self.me.0 as u64));
        }
        if let Some(item) = to_send {
            for &c in &self.children {
                out.send(c, item);
            }
        }
    }

    fn is_done(&self) -> bool {
        !self.own_pending
    }
}

/// For tree `t` of the collection, hands every member the ids on its root path
/// (root first, itself last).
pub fn collect_ancestors(sim: &mut Sim, trees: &TreeCollection, t: usize) -> Result<Vec<Option<Vec<NodeId>>>, SimError> {
    let tree = &trees.trees[t];
    let children = tree.children();
    let mut progs: Vec<Ancestors> = (0..trees.n)
        .map(|i| {
            let depth = tree.entries[i].map(|e| e.depth);
            Ancestors {
                me: NodeId::from_index(i),
                children: children[i].clone(),
                depth,
                list: Vec::new(),
                own_pending: depth == Some(0),
            }
        })
        .collect();
    let rounds = sim.run("collect-ancestors", &mut progs, None)?;
    ensure!(rounds <= 2 * trees.hop_bound as u64, "ancestor collection in tree {} took {rounds} rounds", tree.root);
    Ok(progs
        .into_iter()
        .map(|p| {
            p.depth.map(|d| {
                let mut list = p.list;
                if list.len() == d as usize {
                    list.push(p.me);
                }
                list
            })
        })
        .collect())
}

struct Down {
    children: Vec<NodeId>,
    own: u64,
    is_root: bool,
    value: Option<u64>,
}

impl NodeProgram for Down {
    type Msg = u64;

    fn step(&mut self, _round: u64, inbox: &[(NodeId, u64)], out: &mut Outbox<u64>) {
        if self.value.is_some() {
            return;
        }
        let incoming = if self.is_root { Some(0) } else { inbox.first().map(|&(_, v)| v) };
        if let Some(v) = incoming {
            let acc = v + self.own;
            self.value = Some(acc);
            for &c in &self.children {
                out.send(c, acc);
            }
        }
    }

    fn is_done(&self) -> bool {
        !self.is_root || self.value.is_some()
    }
}

/// Root-to-leaf prefix sums of `contrib` over one tree: each member ends up with
/// the total along its root path (itself included). At most `h` rounds.
pub fn down_pass(sim: &mut Sim, phase: &str, tree: &Tree, h: u32, contrib: &[u64]) -> Result<Vec<Option<u64>>, SimError> {
    if tree.is_empty() {
        return Ok(vec![None; contrib.len()]);
    }
    let children = tree.children();
    let mut progs: Vec<Down> = (0..contrib.len())
        .map(|i| Down {
            children: children[i].clone(),
            own: contrib[i],
            is_root: i == tree.root.index() && tree.entries[i].is_some(),
            value: None,
        })
        .collect();
    let rounds = sim.run(phase, &mut progs, None)?;
    ensure!(rounds <= h as u64, "{phase} in tree {} took {rounds} rounds (h = {h})", tree.root);
    Ok(progs.into_iter().map(|p| p.value).collect())
}

struct Up {
    parent: Option<NodeId>,
    send_round: u64,
    acc: u64,
    member: bool,
    budget: u64,
    round: u64,
}

impl NodeProgram for Up {
    type Msg = u64;

    fn step(&mut self, round: u64, inbox: &[(NodeId, u64)], out: &mut Outbox<u64>) {
        self.round = round;
        for (_, v) in inbox {
            self.acc += v;
        }
        if round == self.send_round {
            if let Some(p) = self.parent {
                out.send(p, self.acc);
            }
        }
    }

    fn is_done(&self) -> bool {
        !self.member || self.round > self.budget
    }
}

/// Leaf-to-root subtree sums of `values` over one tree on a fixed schedule: a
/// member at depth `d` reports to its parent in round `h - d + 1`. Always takes
/// exactly `h + 1` rounds on a nonempty tree.
pub fn up_pass(sim: &mut Sim, phase: &str, tree: &Tree, h: u32, values: &[u64]) -> Result<Vec<u64>, SimError> {
    if tree.is_empty() {
        return Ok(vec![0; values.len()]);
    }
    let budget = h as u64 + 1;
    let mut progs: Vec<Up> = (0..values.len())
        .map(|i| {
            let e = tree.entries[i];
            Up {
                parent: e.and_then(|e| e.parent),
                send_round: e.map_or(0, |e| h as u64 + 1 - e.depth as u64),
                acc: if e.is_some() { values[i] } else { 0 },
                member: e.is_some(),
                budget,
                round: 0,
            }
        })
        .collect();
    let rounds = sim.run(phase, &mut progs, Some(budget + 1))?;
    ensure!(rounds == budget, "{phase} in tree {} took {rounds} rounds instead of {budget}", tree.root);
    Ok(progs.into_iter().map(|p| p.acc).collect())
}
