//! Round-synchronous message passing over the channels of a [`Graph`].
//!
//! In round `r` every node runs its step function on the messages sent to it in
//! round `r - 1` and produces messages for round `r + 1`. A run ends after the
//! first round in which every program reports completion and nothing was sent;
//! the reported round count excludes that final silent round.

mod primitives;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::rc::Rc;

use serde::Serialize;

use crate::error::SimError;
use crate::graph::{Graph, NodeId};

pub use primitives::{
    aggregate_nu, all_to_all, broadcast_k, build_bfs_tree, convergecast, global_max, global_sum, BfsTree,
    Combine,
};

/// Bandwidth unit of a message; at most [`MAX_WORDS`] per message.
pub trait Message: Clone + Debug {
    fn words(&self) -> usize;
}

pub const MAX_WORDS: usize = 4;

pub trait NodeProgram {
    type Msg: Message;

    /// Runs round `round` (starting at 1). `inbox` holds the previous round's
    /// messages ordered by sender id.
    fn step(&mut self, round: u64, inbox: &[(NodeId, Self::Msg)], out: &mut Outbox<Self::Msg>);

    /// A finished program is only stepped again when a message arrives for it.
    fn is_done(&self) -> bool;
}

#[derive(Debug)]
pub struct Outbox<M> {
    msgs: Vec<(NodeId, M)>,
}

impl<M> Outbox<M> {
    pub fn send(&mut self, to: NodeId, msg: M) {
        self.msgs.push((to, msg));
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EngineConfig {
    /// Messages allowed per channel direction per round.
    pub bandwidth: usize,
    /// Round cap per phase; `None` means `64·n²`.
    pub max_rounds: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { bandwidth: 1, max_rounds: None }
    }
}

impl EngineConfig {
    pub fn round_cap(&self, n: usize) -> u64 {
        self.max_rounds.unwrap_or(64 * (n as u64) * (n as u64)).max(1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub rounds: u64,
    pub messages: u64,
    pub per_node_sent: Vec<u64>,
    pub max_channel_load: u64,
}

/// Runs `programs[i]` at node `i + 1` until quiescence.
pub fn run_programs<P: NodeProgram>(
    graph: &Graph,
    programs: &mut [P],
    cfg: &EngineConfig,
    phase: &str,
    max_rounds: u64,
) -> Result<RunStats, SimError> {
    let n = graph.n();
    assert_eq!(programs.len(), n, "one program per node");
    if cfg.bandwidth == 0 {
        return Err(SimError::Config("bandwidth must be at least 1".into()));
    }
    let mut stats = RunStats { per_node_sent: vec![0; n], ..RunStats::default() };
    let mut inbox: Vec<Vec<(NodeId, P::Msg)>> = vec![Vec::new(); n];
    let mut next: Vec<Vec<(NodeId, P::Msg)>> = vec![Vec::new(); n];
    let mut out = Outbox { msgs: Vec::new() };
    let mut round = 0u64;
    loop {
        round += 1;
        if round > max_rounds + 1 {
            return Err(SimError::Timeout { phase: phase.to_string(), max_rounds });
        }
        let mut sent_any = false;
        for (i, prog) in programs.iter_mut().enumerate() {
            if inbox[i].is_empty() && prog.is_done() {
                continue;
            }
            let me = NodeId::from_index(i);
            out.msgs.clear();
            prog.step(round, &inbox[i], &mut out);
            if out.msgs.is_empty() {
                continue;
            }
            sent_any = true;
            out.msgs.sort_by_key(|(to, _)| *to);
            let mut k = 0;
            while k < out.msgs.len() {
                let to = out.msgs[k].0;
                let run = out.msgs[k..].iter().take_while(|(t, _)| *t == to).count();
                if graph.channels(me).binary_search(&to).is_err() {
                    return Err(SimError::NoChannel { node: me, to, round });
                }
                if run > cfg.bandwidth {
                    return Err(SimError::Bandwidth { node: me, to, round, count: run, capacity: cfg.bandwidth });
                }
                stats.max_channel_load = stats.max_channel_load.max(run as u64);
                k += run;
            }
            for (to, msg) in out.msgs.drain(..) {
                let words = msg.words();
                if words > MAX_WORDS {
                    return Err(SimError::MessageTooLarge { node: me, round, words });
                }
                stats.messages += 1;
                stats.per_node_sent[i] += 1;
                next[to.index()].push((me, msg));
            }
        }
        for b in inbox.iter_mut() {
            b.clear();
        }
        std::mem::swap(&mut inbox, &mut next);
        if !sent_any && programs.iter().all(|p| p.is_done()) {
            stats.rounds = round - 1;
            return Ok(stats);
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct PhaseRecord {
    pub name: String,
    pub rounds: u64,
    pub messages: u64,
    pub runs: u64,
}

/// Round, message and congestion accounting, aggregated by phase name in order
/// of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metrics {
    phases: Vec<PhaseRecord>,
    index: BTreeMap<String, usize>,
    per_node_sent: Vec<u64>,
    max_channel_load: u64,
    rounds: u64,
    messages: u64,
}

impl Metrics {
    pub fn new(n: usize) -> Metrics {
        Metrics {
            phases: Vec::new(),
            index: BTreeMap::new(),
            per_node_sent: vec![0; n],
            max_channel_load: 0,
            rounds: 0,
            messages: 0,
        }
    }

    pub fn record(&mut self, name: &str, stats: &RunStats) {
        let idx = match self.index.get(name) {
            Some(&i) => i,
            None => {
                self.phases.push(PhaseRecord { name: name.to_string(), rounds: 0, messages: 0, runs: 0 });
                self.index.insert(name.to_string(), self.phases.len() - 1);
                self.phases.len() - 1
            }
        };
        let rec = &mut self.phases[idx];
        rec.rounds += stats.rounds;
        rec.messages += stats.messages;
        rec.runs += 1;
        for (acc, s) in self.per_node_sent.iter_mut().zip(&stats.per_node_sent) {
            *acc += s;
        }
        self.max_channel_load = self.max_channel_load.max(stats.max_channel_load);
        self.rounds += stats.rounds;
        self.messages += stats.messages;
    }

    pub fn phases(&self) -> &[PhaseRecord] {
        &self.phases
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseRecord> {
        self.index.get(name).map(|&i| &self.phases[i])
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds
    }

    pub fn total_messages(&self) -> u64 {
        self.messages
    }

    pub fn per_node_sent(&self) -> &[u64] {
        &self.per_node_sent
    }

    pub fn max_channel_load(&self) -> u64 {
        self.max_channel_load
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "phases": self.phases,
            "totals": { "rounds": self.rounds, "messages": self.messages },
            "congestion": {
                "max_node_sent": self.per_node_sent.iter().copied().max().unwrap_or(0),
                "max_channel_load": self.max_channel_load,
                "per_node_sent": self.per_node_sent,
            },
        })
    }
}

/// A simulation in progress: the graph, engine settings, accumulated metrics and
/// the cached leader tree used by the global primitives.
pub struct Sim<'g> {
    graph: &'g Graph,
    cfg: EngineConfig,
    metrics: Metrics,
    scope: Vec<String>,
    leader_tree: Option<Rc<BfsTree>>,
}

impl<'g> Sim<'g> {
    pub fn new(graph: &'g Graph, cfg: EngineConfig) -> Sim<'g> {
        Sim { graph, cfg, metrics: Metrics::new(graph.n()), scope: Vec::new(), leader_tree: None }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> Metrics {
        self.metrics
    }

    /// Runs one phase. `bound` raises the round cap for primitives whose
    /// running time is known to exceed the default cap.
    pub fn run<P: NodeProgram>(&mut self, phase: &str, programs: &mut [P], bound: Option<u64>) -> Result<u64, SimError> {
        let name = self.phase_name(phase);
        let cap = self.cfg.round_cap(self.n()).max(bound.unwrap_or(0));
        let stats = run_programs(self.graph, programs, &self.cfg, &name, cap)?;
        self.metrics.record(&name, &stats);
        Ok(stats.rounds)
    }

    fn phase_name(&self, phase: &str) -> String {
        let mut parts = self.scope.clone();
        parts.push(phase.to_string());
        parts.join("/")
    }

    /// Runs `f` with `name` appended to the phase-name prefix.
    pub fn scoped<T, E>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, E>) -> Result<T, E> {
        self.scope.push(name.to_string());
        let r = f(self);
        self.scope.pop();
        r
    }

    /// BFS tree rooted at the leader (node 1), built on first use. Its depth is
    /// made known to every node as part of the construction.
    pub fn leader_tree(&mut self) -> Result<Rc<BfsTree>, SimError> {
        if let Some(t) = &self.leader_tree {
            return Ok(t.clone());
        }
        let saved = std::mem::take(&mut self.scope);
        let built = self.scoped("leader", |sim| {
            let tree = build_bfs_tree(sim, NodeId(1))?;
            let depth = convergecast(sim, &tree, &tree.depth.iter().map(|&d| d as u64).collect::<Vec<_>>(), Combine::Max)?;
            broadcast_k(sim, NodeId(1), &[depth])?;
            debug_assert_eq!(depth, tree.height as u64);
            Ok(tree)
        });
        self.scope = saved;
        let tree = Rc::new(built?);
        self.leader_tree = Some(tree.clone());
        Ok(tree)
    }
}

impl Message for u64 {
    fn words(&self) -> usize {
        1
    }
}

impl Message for (u64, u64) {
    fn words(&self) -> usize {
        2
    }
}

impl Message for (u64, u64, u64) {
    fn words(&self) -> usize {
        3
    }
}
