//! Tree construction, broadcast and convergecast building blocks. Each routine
//! checks its own round bound after the run.

use std::collections::VecDeque;
use std::fmt::Debug;

use super::{Message, NodeProgram, Outbox, Sim};
use crate::error::{ensure, SimError};
use crate::graph::{Graph, NodeId};

/// Hop-shortest spanning tree; parents are the lowest-id neighbor one hop closer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BfsTree {
    pub root: NodeId,
    pub parent: Vec<Option<NodeId>>,
    pub depth: Vec<u32>,
    pub children: Vec<Vec<NodeId>>,
    pub height: u32,
}

/// Hop eccentricity of `src` over the channel graph.
pub(crate) fn eccentricity(g: &Graph, src: NodeId) -> u32 {
    let mut dist = vec![u32::MAX; g.n()];
    dist[src.index()] = 0;
    let mut queue = VecDeque::from([src]);
    let mut ecc = 0;
    while let Some(v) = queue.pop_front() {
        let d = dist[v.index()];
        ecc = ecc.max(d);
        for &w in g.channels(v) {
            if dist[w.index()] == u32::MAX {
                dist[w.index()] = d + 1;
                queue.push_back(w);
            }
        }
    }
    ecc
}

#[derive(Clone, Debug)]
struct Flood {
    depth: u32,
    to_parent: bool,
}

impl Message for Flood {
    fn words(&self) -> usize {
        2
    }
}

struct BfsProgram {
    is_root: bool,
    channels: Vec<NodeId>,
    joined: Option<(Option<NodeId>, u32)>,
    children: Vec<NodeId>,
}

impl NodeProgram for BfsProgram {
    type Msg = Flood;

    fn step(&mut self, round: u64, inbox: &[(NodeId, Flood)], out: &mut Outbox<Flood>) {
        for (from, m) in inbox {
            if m.to_parent {
                self.children.push(*from);
            }
        }
        if self.joined.is_some() {
            return;
        }
        let join = if self.is_root && round == 1 {
            Some((None, 0))
        } else {
            // inbox is sorted by sender, so the first flood comes from the lowest id
            inbox.iter().find(|(_, m)| !m.to_parent).map(|(from, m)| (Some(*from), m.depth + 1))
        };
        if let Some((parent, depth)) = join {
            self.joined = Some((parent, depth));
            for &w in &self.channels {
                out.send(w, Flood { depth, to_parent: Some(w) == parent });
            }
        }
    }

    fn is_done(&self) -> bool {
        self.joined.is_some()
    }
}

pub fn build_bfs_tree(sim: &mut Sim, root: NodeId) -> Result<BfsTree, SimError> {
    let g = sim.graph();
    let mut progs: Vec<BfsProgram> = g
        .nodes()
        .map(|v| BfsProgram { is_root: v == root, channels: g.channels(v).to_vec(), joined: None, children: vec![] })
        .collect();
    let rounds = sim.run("bfs", &mut progs, None)?;
    let ecc = eccentricity(g, root);
    ensure!(rounds <= ecc as u64 + 1, "bfs from {root} took {rounds} rounds, eccentricity {ecc}");
    let mut tree = BfsTree { root, parent: vec![], depth: vec![], children: vec![], height: 0 };
    for p in progs {
        let (parent, depth) = p.joined.ok_or_else(|| SimError::Invariant("bfs left a node unreached".into()))?;
        tree.parent.push(parent);
        tree.depth.push(depth);
        let mut children = p.children;
        children.sort();
        tree.children.push(children);
        tree.height = tree.height.max(depth);
    }
    Ok(tree)
}

#[derive(Clone, Debug)]
struct Indexed<T> {
    idx: u32,
    value: T,
}

impl<T: Message> Message for Indexed<T> {
    fn words(&self) -> usize {
        1 + self.value.words()
    }
}

struct FloodProgram<T> {
    channels: Vec<NodeId>,
    k: usize,
    source_values: Option<Vec<T>>,
    received: Vec<Option<T>>,
    have: usize,
    pending: VecDeque<(u32, Vec<NodeId>)>,
    sent_own: usize,
}

impl<T: Message> NodeProgram for FloodProgram<T> {
    type Msg = Indexed<T>;

    fn step(&mut self, _round: u64, inbox: &[(NodeId, Indexed<T>)], out: &mut Outbox<Indexed<T>>) {
        if let Some(values) = &self.source_values {
            if self.sent_own < values.len() {
                let idx = self.sent_own as u32;
                for &w in &self.channels {
                    out.send(w, Indexed { idx, value: values[idx as usize].clone() });
                }
                self.sent_own += 1;
            }
            return;
        }
        for (from, m) in inbox {
            let slot = &mut self.received[m.idx as usize];
            if slot.is_none() {
                *slot = Some(m.value.clone());
                self.have += 1;
                self.pending.push_back((m.idx, vec![*from]));
            } else if let Some(p) = self.pending.iter_mut().find(|(i, _)| *i == m.idx) {
                p.1.push(*from);
            }
        }
        if let Some((idx, skip)) = self.pending.pop_front() {
            let value = self.received[idx as usize].clone().expect("received");
            for &w in &self.channels {
                if !skip.contains(&w) {
                    out.send(w, Indexed { idx, value: value.clone() });
                }
            }
        }
    }

    fn is_done(&self) -> bool {
        match &self.source_values {
            Some(v) => self.sent_own == v.len(),
            None => self.have == self.k && self.pending.is_empty(),
        }
    }
}

/// Pipelined flood of `values` from `source`; returns what every node holds.
/// Rounds are at most `ecc(source) + k`.
pub fn broadcast_k<T: Message>(sim: &mut Sim, source: NodeId, values: &[T]) -> Result<Vec<T>, SimError> {
    let g = sim.graph();
    let k = values.len();
    let mut progs: Vec<FloodProgram<T>> = g
        .nodes()
        .map(|v| FloodProgram {
            channels: g.channels(v).to_vec(),
            k,
            source_values: (v == source).then(|| values.to_vec()),
            received: vec![None; if v == source { 0 } else { k }],
            have: 0,
            pending: VecDeque::new(),
            sent_own: 0,
        })
        .collect();
    let ecc = eccentricity(g, source) as u64;
    let rounds = sim.run("broadcast", &mut progs, Some(ecc + k as u64 + 1))?;
    ensure!(rounds <= ecc + k as u64, "broadcast of {k} values from {source} took {rounds} rounds (ecc {ecc})");
    for (i, p) in progs.iter().enumerate() {
        ensure!(
            p.source_values.is_some() || p.have == k,
            "node {} received {} of {k} broadcast values",
            NodeId::from_index(i),
            p.have
        );
    }
    Ok(values.to_vec())
}

#[derive(Clone, Debug)]
enum Stream<T> {
    Up { value: T, last: bool },
    UpEnd,
    Down { value: T, last: bool },
    DownEnd,
}

impl<T: Message> Message for Stream<T> {
    fn words(&self) -> usize {
        match self {
            Stream::Up { value, .. } | Stream::Down { value, .. } => 1 + value.words(),
            Stream::UpEnd | Stream::DownEnd => 1,
        }
    }
}

struct GatherScatter<T> {
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    up_queue: VecDeque<T>,
    children_finished: usize,
    up_finished: bool,
    down_queue: VecDeque<T>,
    down_end_received: bool,
    down_finished: bool,
    collected: Vec<T>,
}

impl<T: Message> GatherScatter<T> {
    fn upstream_complete(&self) -> bool {
        self.children_finished == self.children.len()
    }
}

impl<T: Message> NodeProgram for GatherScatter<T> {
    type Msg = Stream<T>;

    fn step(&mut self, _round: u64, inbox: &[(NodeId, Stream<T>)], out: &mut Outbox<Stream<T>>) {
        let is_leader = self.parent.is_none();
        for (_, m) in inbox {
            match m {
                Stream::Up { value, last } => {
                    if is_leader {
                        self.collected.push(value.clone());
                        self.down_queue.push_back(value.clone());
                    } else {
                        self.up_queue.push_back(value.clone());
                    }
                    if *last {
                        self.children_finished += 1;
                    }
                }
                Stream::UpEnd => self.children_finished += 1,
                Stream::Down { value, last } => {
                    self.collected.push(value.clone());
                    self.down_queue.push_back(value.clone());
                    self.down_end_received |= *last;
                }
                Stream::DownEnd => self.down_end_received = true,
            }
        }
        if is_leader {
            self.down_end_received = self.upstream_complete();
        } else if !self.up_finished {
            let parent = self.parent.expect("non-leader has a parent");
            if let Some(value) = self.up_queue.pop_front() {
                let last = self.up_queue.is_empty() && self.upstream_complete();
                self.up_finished = last;
                out.send(parent, Stream::Up { value, last });
            } else if self.upstream_complete() {
                self.up_finished = true;
                out.send(parent, Stream::UpEnd);
            }
        }
        if self.down_finished {
            return;
        }
        if self.children.is_empty() {
            self.down_queue.clear();
            self.down_finished = self.down_end_received;
            return;
        }
        let msg = if let Some(value) = self.down_queue.pop_front() {
            let last = self.down_queue.is_empty() && self.down_end_received;
            self.down_finished = last;
            Some(Stream::Down { value, last })
        } else if self.down_end_received {
            self.down_finished = true;
            Some(Stream::DownEnd)
        } else {
            None
        };
        if let Some(msg) = msg {
            for &c in &self.children {
                out.send(c, msg.clone());
            }
        }
    }

    fn is_done(&self) -> bool {
        (self.parent.is_none() || self.up_finished) && self.down_finished
    }
}

/// Every node contributes any number of values (each at most 3 words); every
/// node ends up holding all of them. Values are gathered at the leader along the
/// leader tree and streamed back down, pipelined in both directions. Returns the
/// values in sorted order.
pub fn all_to_all<T: Message + Ord>(sim: &mut Sim, values: Vec<Vec<T>>) -> Result<Vec<T>, SimError> {
    let tree = sim.leader_tree()?;
    let total: usize = values.iter().map(Vec::len).sum();
    let mut progs: Vec<GatherScatter<T>> = values
        .into_iter()
        .enumerate()
        .map(|(i, own)| GatherScatter {
            parent: tree.parent[i],
            children: tree.children[i].clone(),
            collected: if tree.parent[i].is_none() { own.clone() } else { Vec::new() },
            down_queue: if tree.parent[i].is_none() { own.iter().cloned().collect() } else { VecDeque::new() },
            up_queue: if tree.parent[i].is_none() { VecDeque::new() } else { own.into() },
            children_finished: 0,
            up_finished: false,
            down_end_received: false,
            down_finished: false,
        })
        .collect();
    let bound = 2 * tree.height as u64 + 2 * total.max(1) as u64;
    let rounds = sim.run("all-to-all", &mut progs, Some(bound + 1))?;
    ensure!(rounds <= bound, "all-to-all of {total} values took {rounds} rounds (bound {bound})");
    for (i, p) in progs.iter().enumerate() {
        ensure!(
            p.collected.len() == total,
            "node {} holds {} of {total} all-to-all values",
            NodeId::from_index(i),
            p.collected.len()
        );
    }
    let mut all = std::mem::take(&mut progs[tree.root.index()].collected);
    all.sort();
    Ok(all)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Combine {
    Sum,
    Max,
}

impl Combine {
    fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            Combine::Sum => a + b,
            Combine::Max => a.max(b),
        }
    }
}

struct Converge {
    parent: Option<NodeId>,
    waiting: usize,
    acc: u64,
    op: Combine,
    sent: bool,
}

impl NodeProgram for Converge {
    type Msg = u64;

    fn step(&mut self, _round: u64, inbox: &[(NodeId, u64)], out: &mut Outbox<u64>) {
        for (_, v) in inbox {
            self.acc = self.op.apply(self.acc, *v);
            self.waiting -= 1;
        }
        if self.waiting == 0 && !self.sent {
            self.sent = true;
            if let Some(p) = self.parent {
                out.send(p, self.acc);
            }
        }
    }

    fn is_done(&self) -> bool {
        self.sent
    }
}

/// Combines one value per node up `tree`; the root's result is returned.
/// Rounds are at most the tree height plus one.
pub fn convergecast(sim: &mut Sim, tree: &BfsTree, values: &[u64], op: Combine) -> Result<u64, SimError> {
    let mut progs: Vec<Converge> = (0..values.len())
        .map(|i| Converge { parent: tree.parent[i], waiting: tree.children[i].len(), acc: values[i], op, sent: false })
        .collect();
    let rounds = sim.run("convergecast", &mut progs, None)?;
    ensure!(rounds <= tree.height as u64 + 1, "convergecast took {rounds} rounds on a tree of height {}", tree.height);
    Ok(progs[tree.root.index()].acc)
}

/// Sum over all nodes, made known to every node.
pub fn global_sum(sim: &mut Sim, values: &[u64]) -> Result<u64, SimError> {
    global(sim, values, Combine::Sum)
}

/// Maximum over all nodes, made known to every node.
pub fn global_max(sim: &mut Sim, values: &[u64]) -> Result<u64, SimError> {
    global(sim, values, Combine::Max)
}

fn global(sim: &mut Sim, values: &[u64], op: Combine) -> Result<u64, SimError> {
    let tree = sim.leader_tree()?;
    let v = convergecast(sim, &tree, values, op)?;
    broadcast_k(sim, tree.root, &[v])?;
    Ok(v)
}

struct NuPipeline<'a> {
    parent: Option<NodeId>,
    send_offset: u64,
    expected_from_children: usize,
    acc: Vec<(u64, u64)>,
    own: &'a [(u64, u64)],
    received: usize,
    sent: usize,
    schedule_ok: bool,
}

impl NodeProgram for NuPipeline<'_> {
    type Msg = (u64, u64, u64);

    fn step(&mut self, round: u64, inbox: &[(NodeId, (u64, u64, u64))], out: &mut Outbox<(u64, u64, u64)>) {
        for (_, (mu, a, b)) in inbox {
            let slot = &mut self.acc[*mu as usize];
            slot.0 += a;
            slot.1 += b;
            self.received += 1;
        }
        let Some(parent) = self.parent else { return };
        let m = self.acc.len() as u64;
        if round > self.send_offset && round <= self.send_offset + m {
            let mu = (round - self.send_offset - 1) as usize;
            // every child's contribution for `mu` must already be in
            let due = self.expected_from_children * (mu + 1);
            self.schedule_ok &= self.received >= due;
            let (a, b) = (self.acc[mu].0 + self.own[mu].0, self.acc[mu].1 + self.own[mu].1);
            out.send(parent, (mu as u64, a, b));
            self.sent += 1;
        }
    }

    fn is_done(&self) -> bool {
        match self.parent {
            Some(_) => self.sent == self.acc.len(),
            None => self.received == self.expected_from_children * self.acc.len(),
        }
    }
}

/// Pipelined convergecast of `m` pairs per node up `tree`: a node at depth `d`
/// forwards its running total for point `μ` in round `(height - d) + μ`. Returns
/// the root's totals. Rounds are at most `height + m`.
pub fn aggregate_nu(sim: &mut Sim, tree: &BfsTree, sigma: &[Vec<(u64, u64)>]) -> Result<Vec<(u64, u64)>, SimError> {
    let m = sigma.first().map_or(0, Vec::len);
    ensure!(sigma.iter().all(|s| s.len() == m), "every node needs one value pair per sample point");
    let mut progs: Vec<NuPipeline> = sigma
        .iter()
        .enumerate()
        .map(|(i, own)| NuPipeline {
            parent: tree.parent[i],
            send_offset: (tree.height - tree.depth[i]) as u64,
            expected_from_children: tree.children[i].len(),
            acc: vec![(0, 0); m],
            own,
            received: 0,
            sent: 0,
            schedule_ok: true,
        })
        .collect();
    let bound = tree.height as u64 + m as u64;
    let rounds = sim.run("nu-pipeline", &mut progs, Some(bound + 1))?;
    ensure!(rounds <= bound, "nu pipeline took {rounds} rounds (bound {bound})");
    ensure!(progs.iter().all(|p| p.schedule_ok), "nu pipeline forwarded a partial sum");
    let root = &progs[tree.root.index()];
    Ok(root.acc.iter().zip(root.own).map(|(a, o)| (a.0 + o.0, a.1 + o.1)).collect())
}
