//! Getting every `δ(x, c)` to the blocker node `c` that needs it.
//!
//! Far sources (more than `H` hops away) are handled through a second blocker
//! set whose members run full shortest-path trees. Near sources push their value
//! up `c`'s hop-bounded in-tree; heavily loaded relay nodes are first taken out
//! and answered for directly, then the remaining messages are routed either
//! round-robin or in stages of fixed-length frames.

use std::collections::VecDeque;

use serde::Serialize;

use crate::blocker::{run_blocker, Mode, Params};
use crate::csssp::{bellman_ford, build_csssp, remove_subtrees, up_pass, Direction, TreeCollection};
use crate::engine::{all_to_all, global_max, NodeProgram, Outbox, Sim};
use crate::error::{ensure, SimError};
use crate::fraction::{ceil_log2, ceil_root, ceil_sqrt};
use crate::graph::{Distance, NodeId};
use crate::oracle::dijkstra_with_hops;

/// Optional overrides; unset fields take their defaults in [`QSinkParams::resolve`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QSinkParams {
    pub hops: Option<u32>,
    pub threshold: Option<u64>,
    pub log: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Resolved {
    /// Hop bound of the in-trees rooted at the blocker nodes.
    pub hops: u32,
    /// Per-node message budget enforced by the bottleneck step.
    pub threshold: u64,
    pub log: u64,
    pub stage_cap: u32,
}

impl QSinkParams {
    pub fn resolve(&self, n: usize, q: usize) -> Result<Resolved, SimError> {
        let n64 = n as u64;
        let max_hops = (n64.saturating_sub(1)).max(1) as u32;
        let hops = self.hops.unwrap_or_else(|| (ceil_root(n64 * n64, 3) as u32).min(max_hops));
        if hops == 0 || hops > max_hops {
            return Err(SimError::Config(format!("q-sink hop bound {hops} outside [1, {max_hops}]")));
        }
        let log = self.log.unwrap_or_else(|| ceil_log2(n64).max(1));
        let threshold = self.threshold.unwrap_or_else(|| n64 * ceil_sqrt(q as u64 * ceil_log2(n64).max(1)));
        if log == 0 || threshold == 0 {
            return Err(SimError::Config("q-sink threshold and log base must be positive".into()));
        }
        Ok(Resolved { hops, threshold, log, stage_cap: ceil_log2(n64 + 2) as u32 })
    }
}

impl Resolved {
    pub fn frames_per_stage(&self, stage: u32) -> u64 {
        let h = self.hops as u64;
        h.saturating_mul(self.log.saturating_pow(stage + 1)).saturating_add(h)
    }

    /// Largest frame length the analysis allows in stage `stage ≥ 1`.
    pub fn frame_bound(&self, stage: u32) -> u64 {
        let denom = (self.hops as u64).saturating_mul(self.log.saturating_pow(stage));
        self.threshold.div_ceil(denom).max(1)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Plain,
    Staged,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub stage: u32,
    #[serde(rename = "max_Qvi")]
    pub max_qvi: u64,
    pub frames: u64,
    pub messages_moved: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BottleneckOutcome {
    pub nodes: Vec<NodeId>,
    /// Tree-node count summed over all trees before any removal.
    pub initial_total: u64,
    pub max_total_after: u64,
}

/// Per-node message counts `count[v][k]` for the `k`-th tree, one fixed-length
/// convergecast (`H + 1` rounds) per nonempty tree.
pub fn compute_count(sim: &mut Sim, trees: &TreeCollection) -> Result<Vec<Vec<u64>>, SimError> {
    let n = trees.n();
    let mut count = vec![vec![0; trees.trees().len()]; n];
    for (k, tree) in trees.trees().iter().enumerate() {
        let ones: Vec<u64> = (0..n).map(|i| tree.contains(NodeId::from_index(i)) as u64).collect();
        let sums = up_pass(sim, "compute-count", tree, trees.hop_bound(), &ones)?;
        for v in 0..n {
            count[v][k] = sums[v];
        }
    }
    Ok(count)
}

fn totals(count: &[Vec<u64>]) -> Vec<u64> {
    count.iter().map(|row| row.iter().sum()).collect()
}

/// Repeatedly takes the node carrying the most messages out of every tree until
/// no node carries more than `threshold`.
pub fn compute_bottleneck(sim: &mut Sim, trees: &mut TreeCollection, threshold: u64) -> Result<BottleneckOutcome, SimError> {
    let n = trees.n();
    let mut count = compute_count(sim, trees)?;
    let initial_total = trees.total_size() as u64;
    let mut nodes = Vec::new();
    loop {
        let tot = totals(&count);
        let items: Vec<Vec<(u64, u64)>> =
            tot.iter().enumerate().map(|(v, &t)| if t > 0 { vec![(v as u64 + 1, t)] } else { vec![] }).collect();
        let known = sim.scoped("totals", |sim| all_to_all(sim, items))?;
        let Some(&(id, max)) = known.iter().max_by_key(|&&(id, t)| (t, std::cmp::Reverse(id))) else { break };
        if max <= threshold {
            break;
        }
        ensure!(nodes.len() < n, "bottleneck selection did not stop after {n} picks");
        let b = NodeId(id as u32);
        nodes.push(b);
        remove_subtrees(sim, trees, &[b])?;
        count = compute_count(sim, trees)?;
    }
    let max_total_after = totals(&count).into_iter().max().unwrap_or(0);
    ensure!(max_total_after <= threshold, "a node still carries {max_total_after} > {threshold} messages");
    let cap = initial_total.div_ceil(threshold);
    ensure!(nodes.len() as u64 <= cap, "{} bottleneck nodes exceed the bound {cap}", nodes.len());
    Ok(BottleneckOutcome { nodes, initial_total, max_total_after })
}

/// `(source, distance, tree index)`.
type Payload = (u64, u64, u64);

struct Router {
    /// Parent toward the root, per tree.
    parent: Vec<Option<NodeId>>,
    is_root: Vec<bool>,
    queues: Vec<VecDeque<(u64, u64)>>,
    schedule: Schedule,
    /// Trees with pending traffic at stage start, ascending.
    active: Vec<usize>,
    frame_len: u64,
    last_round: u64,
    round: u64,
    cursor: usize,
    sent: Vec<Vec<u64>>,
    received: Vec<Vec<(u64, u64)>>,
}

impl Router {
    fn pending(&self) -> bool {
        self.queues.iter().any(|q| !q.is_empty())
    }

    fn pick(&mut self) -> Option<usize> {
        match self.schedule {
            Schedule::Staged => {
                let slot = ((self.round - 1) % self.frame_len) as usize;
                let &k = self.active.get(slot)?;
                (!self.queues[k].is_empty()).then_some(k)
            }
            Schedule::Plain => {
                let m = self.queues.len();
                let k = (0..m).map(|o| (self.cursor + o) % m).find(|&k| !self.queues[k].is_empty())?;
                self.cursor = (k + 1) % m;
                Some(k)
            }
        }
    }
}

impl NodeProgram for Router {
    type Msg = Payload;

    fn step(&mut self, round: u64, inbox: &[(NodeId, Payload)], out: &mut Outbox<Payload>) {
        self.round = round;
        let mut arrived: Vec<(usize, u64, u64)> = inbox.iter().map(|&(_, (s, d, k))| (k as usize, s, d)).collect();
        arrived.sort_by_key(|&(k, s, _)| (k, s));
        for (k, s, d) in arrived {
            if self.is_root[k] {
                self.received[k].push((s, d));
            } else {
                self.queues[k].push_back((s, d));
            }
        }
        if round > self.last_round {
            return;
        }
        if let Some(k) = self.pick() {
            let (s, d) = self.queues[k].pop_front().expect("nonempty");
            out.send(self.parent[k].expect("non-root member has a parent"), (s, d, k as u64));
            self.sent[k].push((round - 1) / self.frame_len + 1);
        }
    }

    fn is_done(&self) -> bool {
        !self.pending() || self.round >= self.last_round
    }
}

/// What the routing phase delivered and how it went.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Delivery {
    /// Per tree, `(source id, distance)` pairs received at its root, sorted.
    pub received: Vec<Vec<(u64, u64)>>,
    pub stages: Vec<StageRecord>,
    pub rounds: u64,
}

/// Routes every member's own value (`values[v][k]`) up tree `k` to its root.
pub fn route(
    sim: &mut Sim,
    trees: &TreeCollection,
    values: &[Vec<Distance>],
    counts: &[Vec<u64>],
    params: &Resolved,
    schedule: Schedule,
) -> Result<Delivery, SimError> {
    let n = trees.n();
    let m = trees.trees().len();
    let mut progs: Vec<Router> = (0..n)
        .map(|v| {
            let me = NodeId::from_index(v);
            let mut queues = vec![VecDeque::new(); m];
            let mut parent = vec![None; m];
            let mut is_root = vec![false; m];
            for (k, t) in trees.trees().iter().enumerate() {
                is_root[k] = t.root() == me;
                if let Some(e) = t.get(me) {
                    parent[k] = e.parent;
                    if !is_root[k] {
                        let d = values[v][k].value().expect("finite distance toward a tree root");
                        queues[k].push_back((me.0 as u64, d));
                    }
                }
            }
            Router {
                parent,
                is_root,
                queues,
                schedule,
                active: Vec::new(),
                frame_len: 1,
                last_round: u64::MAX,
                round: 0,
                cursor: 0,
                sent: vec![Vec::new(); m],
                received: vec![Vec::new(); m],
            }
        })
        .collect();
    let mut delivery = Delivery::default();
    let mut sent_total = vec![vec![0u64; m]; n];
    let depth = |v: usize, k: usize| trees.trees()[k].get(NodeId::from_index(v)).map(|e| e.depth);

    match schedule {
        Schedule::Plain => {
            let bound = counts.iter().map(|c| c.iter().sum::<u64>()).sum::<u64>() + 2;
            delivery.rounds = sim.run("plain", &mut progs, Some(bound))?;
        }
        Schedule::Staged => {
            let mut stage = 0u32;
            loop {
                // residual traffic each node still has to pass on, per tree
                let residual: Vec<Vec<u64>> = (0..n)
                    .map(|v| (0..m).map(|k| if progs[v].is_root[k] { 0 } else { counts[v][k] - sent_total[v][k] }).collect())
                    .collect();
                let local: Vec<u64> = residual.iter().map(|r| r.iter().filter(|&&x| x > 0).count() as u64).collect();
                let frame_len = sim.scoped("frame-length", |sim| global_max(sim, &local))?;
                if frame_len == 0 {
                    break;
                }
                ensure!(stage < params.stage_cap, "messages still queued after {} stages", params.stage_cap);
                if stage >= 1 {
                    let cap = params.frame_bound(stage);
                    ensure!(frame_len <= cap, "stage {stage}: {frame_len} active trees at a node, bound {cap}");
                }
                let frames = params.frames_per_stage(stage);
                for (v, p) in progs.iter_mut().enumerate() {
                    p.active = (0..m).filter(|&k| residual[v][k] > 0).collect();
                    p.frame_len = frame_len;
                    p.last_round = frames.saturating_mul(frame_len);
                    p.round = 0;
                    p.sent.iter_mut().for_each(Vec::clear);
                }
                let bound = frames.saturating_mul(frame_len).saturating_add(2);
                let rounds = sim.run(&format!("stage-{stage}"), &mut progs, Some(bound))?;
                let mut moved = 0;
                let used_frames = rounds.div_ceil(frame_len).min(frames);
                for v in 0..n {
                    for k in 0..m {
                        let Some(d) = depth(v, k) else { continue };
                        let sends = &progs[v].sent[k];
                        moved += sends.len() as u64;
                        sent_total[v][k] += sends.len() as u64;
                        if residual[v][k] == 0 {
                            continue;
                        }
                        let lag = params.hops as u64 - d as u64;
                        for f in 1..=used_frames {
                            let by_f = sends.iter().filter(|&&x| x <= f).count() as u64;
                            let want = residual[v][k].min(f.saturating_sub(lag));
                            ensure!(
                                by_f >= want,
                                "stage {stage}, frame {f}: node {} sent {by_f} of tree {k}'s messages, expected {want}",
                                v + 1
                            );
                        }
                    }
                }
                delivery.rounds += rounds;
                delivery.stages.push(StageRecord { stage, max_qvi: frame_len, frames: used_frames, messages_moved: moved });
                stage += 1;
            }
        }
    }

    for p in &progs {
        ensure!(!p.pending(), "routing finished with queued messages");
    }
    let mut received = vec![Vec::new(); m];
    for p in progs {
        for (k, r) in p.received.into_iter().enumerate() {
            received[k].extend(r);
        }
    }
    for (k, r) in received.iter_mut().enumerate() {
        r.sort_unstable();
        let tree = &trees.trees()[k];
        let expected: Vec<(u64, u64)> = tree
            .members()
            .filter(|&v| v != tree.root())
            .map(|v| (v.0 as u64, values[v.index()][k].value().expect("finite")))
            .collect();
        ensure!(*r == expected, "tree {} root received a different message set than was sent", tree.root());
    }
    delivery.received = received;
    Ok(delivery)
}

type Matrix = Vec<Vec<Distance>>;

/// Full-depth in- and out-trees from `roots`, then every `δ(x, r)` for every
/// root `r` made known everywhere. Returns `(to_root[x][r], from_root[r][y])`.
fn full_trees(sim: &mut Sim, roots: &[NodeId]) -> Result<(Matrix, Matrix), SimError> {
    let n = sim.n();
    let hops = (n as u32).saturating_sub(1).max(1);
    let ins = bellman_ford(sim, roots, hops, Direction::In)?;
    let outs = bellman_ford(sim, roots, hops, Direction::Out)?;
    let mut items = vec![Vec::new(); n];
    for (r, t) in ins.trees().iter().enumerate() {
        for v in t.members() {
            items[v.index()].push((v.0 as u64, r as u64, t.get(v).expect("member").dist.value().expect("finite")));
        }
    }
    let known = sim.scoped("exchange", |sim| all_to_all(sim, items))?;
    let mut to_root = vec![vec![Distance::INF; roots.len()]; n];
    for (x, r, d) in known {
        to_root[x as usize - 1][r as usize] = Distance::finite(d);
    }
    let from_root = outs
        .trees()
        .iter()
        .map(|t| (0..n).map(|y| t.get(NodeId::from_index(y)).map_or(Distance::INF, |e| e.dist)).collect())
        .collect();
    Ok((to_root, from_root))
}

/// `min_r to_root[x][r] + from_root[r][c]`, folded into `known[k][x]` at each
/// blocker node `q[k]`.
fn fold_through(known: &mut [Vec<Distance>], q: &[NodeId], to_root: &[Vec<Distance>], from_root: &[Vec<Distance>]) {
    for (k, &c) in q.iter().enumerate() {
        for (x, row) in to_root.iter().enumerate() {
            for (r, &d) in row.iter().enumerate() {
                let cand = d.add(from_root[r][c.index()]);
                if cand < known[k][x] {
                    known[k][x] = cand;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QSinkOutcome {
    pub params: Resolved,
    /// `known[k][x]`: `δ(x, q[k])` as held by `q[k]` at the end.
    #[serde(skip)]
    pub known: Vec<Vec<Distance>>,
    pub long_range_blocker: Option<Vec<NodeId>>,
    pub bottleneck: BottleneckOutcome,
    pub delivery: Delivery,
}

pub struct QSinkInput<'a> {
    pub q: &'a [NodeId],
    /// `to_q[x][k] = δ(x, q[k])`, held at `x`.
    pub to_q: &'a [Vec<Distance>],
    pub params: &'a QSinkParams,
    pub blocker: &'a Params,
    pub mode: Mode,
    pub schedule: Schedule,
    /// Compare results against sequential shortest paths as they are produced.
    pub check: bool,
}

/// Runs both cases and leaves every blocker node with its full column.
pub fn run_qsink(sim: &mut Sim, input: &QSinkInput) -> Result<QSinkOutcome, SimError> {
    let n = sim.n();
    let q = input.q;
    let params = input.params.resolve(n, q.len())?;
    let mut known = vec![vec![Distance::INF; n]; q.len()];
    for (k, &c) in q.iter().enumerate() {
        known[k][c.index()] = Distance::ZERO;
    }
    let oracle: Vec<(Vec<Distance>, Vec<Option<u32>>)> = if input.check {
        q.iter().map(|&c| dijkstra_with_hops(sim.graph(), c, Direction::In)).collect()
    } else {
        Vec::new()
    };
    let mut trees = sim.scoped("in-trees", |sim| build_csssp(sim, q, params.hops, Direction::In))?;

    let mut long_range_blocker = None;
    if (params.hops as usize) < n.saturating_sub(1) {
        let (to_root, from_root) = sim.scoped("long-range", |sim| {
            let out = run_blocker(sim, &trees, input.blocker, input.mode)?;
            full_trees(sim, &out.q).map(|r| (out.q, r))
        })
        .map(|(qq, r)| {
            long_range_blocker = Some(qq);
            r
        })?;
        fold_through(&mut known, q, &to_root, &from_root);
        if input.check {
            for (k, &c) in q.iter().enumerate() {
                let (dist, hops) = &oracle[k];
                for x in 0..n {
                    if hops[x].is_some_and(|hx| hx > params.hops) {
                        ensure!(known[k][x] == dist[x], "long-range value for ({}, {c}) is {} not {}", x + 1, known[k][x], dist[x]);
                    }
                }
            }
        }
    }

    let bottleneck = sim.scoped("bottleneck", |sim| compute_bottleneck(sim, &mut trees, params.threshold))?;
    if !bottleneck.nodes.is_empty() {
        let (to_root, from_root) = sim.scoped("bottleneck", |sim| full_trees(sim, &bottleneck.nodes))?;
        fold_through(&mut known, q, &to_root, &from_root);
    }
    let counts = compute_count(sim, &trees)?;
    let delivery = sim.scoped("route", |sim| route(sim, &trees, input.to_q, &counts, &params, input.schedule))?;
    for (k, got) in delivery.received.iter().enumerate() {
        for &(s, d) in got {
            let slot = &mut known[k][s as usize - 1];
            *slot = (*slot).min(Distance::finite(d));
        }
    }
    if input.check {
        for (k, &c) in q.iter().enumerate() {
            for x in 0..n {
                ensure!(known[k][x] == oracle[k].0[x], "node {c} holds {} for source {}, expected {}", known[k][x], x + 1, oracle[k].0[x]);
            }
        }
    }
    Ok(QSinkOutcome { params, known, long_range_blocker, bottleneck, delivery })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;
    use crate::graph::{Edge, Graph};

    fn chain_into(n: usize) -> Graph {
        // 1 → 2 → … → n, the sink is node n
        let edges = (1..n as u32).map(|i| Edge { src: NodeId(i), dst: NodeId(i + 1), weight: 1 }).collect();
        Graph::new(n, true, edges).unwrap()
    }

    #[test]
    fn counts_on_chain() {
        let g = chain_into(3);
        let mut sim = Sim::new(&g, EngineConfig::default());
        let t = build_csssp(&mut sim, &[NodeId(3)], 2, Direction::In).unwrap();
        let c = compute_count(&mut sim, &t).unwrap();
        assert_eq!(c, vec![vec![1], vec![2], vec![3]]);
        assert_eq!(sim.metrics().phase("compute-count").unwrap().rounds, 3);
    }

    #[test]
    fn star_center_is_first_bottleneck() {
        let edges = (2..=5).map(|i| Edge { src: NodeId(i), dst: NodeId(1), weight: 1 }).collect();
        let g = Graph::new(5, false, edges).unwrap();
        let mut sim = Sim::new(&g, EngineConfig::default());
        let mut t = build_csssp(&mut sim, &[NodeId(2)], 2, Direction::In).unwrap();
        let b = compute_bottleneck(&mut sim, &mut t, 1).unwrap();
        assert_eq!(b.nodes[0], NodeId(2));
        let mut t = build_csssp(&mut sim, &[NodeId(2)], 2, Direction::In).unwrap();
        let b = compute_bottleneck(&mut sim, &mut t, 100).unwrap();
        assert!(b.nodes.is_empty());
    }

    #[test]
    fn chain_delivery_both_schedules() {
        let n = 6;
        let g = chain_into(n);
        let values: Vec<Vec<Distance>> = (0..n).map(|x| vec![Distance::finite((n - 1 - x) as u64)]).collect();
        let params = Resolved { hops: 5, threshold: 100, log: 3, stage_cap: 3 };
        let mut out = Vec::new();
        for schedule in [Schedule::Plain, Schedule::Staged] {
            let mut sim = Sim::new(&g, EngineConfig::default());
            let t = build_csssp(&mut sim, &[NodeId(6)], 5, Direction::In).unwrap();
            let counts = compute_count(&mut sim, &t).unwrap();
            let d = route(&mut sim, &t, &values, &counts, &params, schedule).unwrap();
            assert_eq!(d.received[0].len(), 5);
            if schedule == Schedule::Staged {
                assert_eq!(d.stages.len(), 1);
                assert!(d.stages[0].frames <= 5 + 5);
            }
            out.push(d.received);
        }
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn defaults() {
        let p = QSinkParams::default().resolve(27, 4).unwrap();
        assert_eq!(p.hops, 9);
        assert_eq!(p.log, 5);
        assert_eq!(p.threshold, 27 * 5);
        assert_eq!(p.frames_per_stage(0), 9 * 5 + 9);
        assert!(QSinkParams { hops: Some(30), ..Default::default() }.resolve(27, 4).is_err());
    }
}
