//! The end-to-end all-pairs computation.
//!
//! 1. hop-bounded out-trees from every node;
//! 2. a blocker set `Q` for them;
//! 3. hop-bounded in-trees into every blocker node;
//! 4. the blocker-to-blocker distances made known everywhere;
//! 5. every node closes those locally into `δ(x, c)` for all `c ∈ Q`;
//! 6. each `c` collects `δ(x, c)` for all `x` (see [`crate::qsink`]);
//! 7. per source, a hop-bounded relaxation seeded at the blocker nodes.

use serde::Serialize;
use serde_json::json;

use crate::blocker::{run_blocker, size_bound, BlockerOutcome, Mode, Params};
use crate::csssp::{bellman_ford, build_csssp, consistency_report, verify_csssp, ConsistencyReport, Direction};
use crate::engine::{all_to_all, EngineConfig, Metrics, NodeProgram, Outbox, Sim};
use crate::error::{ensure, Error, SimError};
use crate::fraction::{ceil_root, format_fraction};
use crate::graph::{Distance, Graph, NodeId, Weight};
use crate::oracle::{self, DistanceMatrix};
use crate::qsink::{run_qsink, QSinkInput, QSinkOutcome, QSinkParams, Schedule};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    /// Hop bound; `None` means `⌈n^(1/3)⌉`.
    pub h: Option<u32>,
    pub blocker: Params,
    pub mode: Mode,
    pub qsink: QSinkParams,
    pub schedule: Schedule,
    /// Seed the final relaxation with every node's own out-tree label as well,
    /// not only at the blocker nodes.
    pub extension_seed_local: bool,
    /// Check every step against the sequential oracles.
    pub check_invariants: bool,
    pub engine: EngineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            h: None,
            blocker: Params::default(),
            mode: Mode::Deterministic,
            qsink: QSinkParams::default(),
            schedule: Schedule::Staged,
            extension_seed_local: false,
            check_invariants: true,
            engine: EngineConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn resolve_h(&self, n: usize) -> Result<u32, Error> {
        let max = (n.saturating_sub(1)).max(1) as u32;
        let h = self.h.unwrap_or_else(|| (ceil_root(n as u64, 3) as u32).clamp(1, max));
        if h == 0 || h > max {
            return Err(Error::Config(format!("hop bound {h} outside [1, {max}] for {n} nodes")));
        }
        Ok(h)
    }

    pub fn to_json(&self, n: usize) -> serde_json::Value {
        json!({
            "h": self.resolve_h(n).ok(),
            "epsilon": format_fraction(&self.blocker.epsilon),
            "delta": format_fraction(&self.blocker.delta),
            "heavy_check": self.blocker.heavy_check,
            "mode": self.mode,
            "schedule": self.schedule,
            "qsink": self.qsink,
            "extension_seed_local": self.extension_seed_local,
            "check_invariants": self.check_invariants,
            "engine": self.engine,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub step: u8,
    pub name: &'static str,
    pub rounds: u64,
    pub messages: u64,
    pub skipped: bool,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub distances: DistanceMatrix,
    pub metrics: Metrics,
    pub steps: Vec<StepRecord>,
    pub h: u32,
    pub q: Vec<NodeId>,
    pub blocker: Option<BlockerOutcome>,
    pub qsink: Option<QSinkOutcome>,
    pub consistency: ConsistencyReport,
}

impl PipelineOutcome {
    pub fn step(&self, step: u8) -> &StepRecord {
        &self.steps[step as usize - 1]
    }

    pub fn metrics_json(&self, cfg: &PipelineConfig) -> serde_json::Value {
        let mut m = self.metrics.to_json();
        let n = self.distances.n();
        let obj = m.as_object_mut().expect("metrics serialize to an object");
        obj.insert("config".into(), cfg.to_json(n));
        obj.insert("n".into(), json!(n));
        obj.insert("steps".into(), json!(self.steps));
        obj.insert("q".into(), json!(self.q));
        obj.insert("consistency".into(), json!(self.consistency));
        if let Some(b) = &self.blocker {
            obj.insert(
                "blocker".into(),
                json!({
                    "size": b.q.len(),
                    "size_bound": size_bound(n, self.h) + b.heavy_selections,
                    "selection_steps": b.selection_steps,
                    "envelope": b.envelope,
                    "heavy_selections": b.heavy_selections,
                    "fallback_used": b.fallback_used,
                    "trace": b.trace,
                    "derand": b.derand,
                }),
            );
        }
        if let Some(s) = &self.qsink {
            obj.insert("qsink".into(), json!(s));
        }
        m
    }
}

const STEP_NAMES: [&str; 7] =
    ["csssp", "blocker", "blocker-in-trees", "blocker-matrix", "local-closure", "q-sink", "extension"];

struct StepClock {
    steps: Vec<StepRecord>,
    rounds: u64,
    messages: u64,
}

impl StepClock {
    fn close(&mut self, sim: &Sim, skipped: bool) {
        let m = sim.metrics();
        let step = self.steps.len() as u8 + 1;
        self.steps.push(StepRecord {
            step,
            name: STEP_NAMES[step as usize - 1],
            rounds: m.total_rounds() - self.rounds,
            messages: m.total_messages() - self.messages,
            skipped,
        });
        self.rounds = m.total_rounds();
        self.messages = m.total_messages();
    }
}

/// Computes all-pairs distances on `g`; the row of `x` ends up spread over the
/// nodes (node `t` holds `δ(x, t)`) and is gathered into the returned matrix.
pub fn run_apsp(g: &Graph, cfg: &PipelineConfig) -> Result<PipelineOutcome, Error> {
    let n = g.n();
    let h = cfg.resolve_h(n)?;
    cfg.blocker.validate().map_err(Error::Config)?;
    let mut sim = Sim::new(g, cfg.engine.clone());
    let mut clock = StepClock { steps: Vec::new(), rounds: 0, messages: 0 };
    let all: Vec<NodeId> = g.nodes().collect();

    let trees = sim.scoped("step1", |sim| build_csssp(sim, &all, h, Direction::Out)).map_err(Error::step("step 1"))?;
    let bf = sim.metrics().phase("step1/bellman-ford").map_or(0, |p| p.rounds);
    step_check(bf == 2 * h as u64 * n as u64, "step 1", format!("bellman-ford took {bf} rounds, expected 2h·n"))?;
    if cfg.check_invariants {
        verify_csssp(g, &trees).map_err(Error::step("step 1"))?;
    }
    let consistency = consistency_report(&trees);
    clock.close(&sim, false);

    if h as usize >= n.saturating_sub(1) {
        // the trees already span every shortest path
        let mut distances = DistanceMatrix::new(n);
        for (x, t) in trees.trees().iter().enumerate() {
            for v in t.members() {
                distances.set(NodeId::from_index(x), v, t.get(v).expect("member").dist);
            }
        }
        for _ in 2..=7 {
            clock.close(&sim, true);
        }
        return finish(g, cfg, sim, clock, distances, h, Vec::new(), None, None, consistency);
    }

    let blocker =
        sim.scoped("step2", |sim| run_blocker(sim, &trees, &cfg.blocker, cfg.mode)).map_err(Error::step("step 2"))?;
    let q = blocker.q.clone();
    clock.close(&sim, false);

    // Step 3: δ over at most h+1 hops into every blocker node; the extra hop
    // lets consecutive blocker nodes on a path reach each other
    let in_trees =
        sim.scoped("step3", |sim| bellman_ford(sim, &q, h + 1, Direction::In)).map_err(Error::step("step 3"))?;
    let short: Vec<Vec<Distance>> = (0..n)
        .map(|x| in_trees.trees().iter().map(|t| t.get(NodeId::from_index(x)).map_or(Distance::INF, |e| e.dist)).collect())
        .collect();
    step_check(
        clock_rounds(&sim, &clock) == (h as u64 + 1) * q.len() as u64,
        "step 3",
        "in-tree rounds differ from (h+1)·|Q|".into(),
    )?;
    clock.close(&sim, false);

    let matrix = sim.scoped("step4", |sim| broadcast_blocker_matrix(sim, &q, &short)).map_err(Error::step("step 4"))?;
    if cfg.check_invariants {
        for (a, &ca) in q.iter().enumerate() {
            let want = oracle::h_hop_distances_dir(g, ca, h as usize + 1, Direction::Out);
            for (b, &cb) in q.iter().enumerate() {
                step_check(matrix[a][b] == want[cb.index()], "step 4", format!("blocker distance ({ca}, {cb}) wrong"))?;
            }
        }
    }
    clock.close(&sim, false);

    let closure = oracle::min_plus_closure(&matrix);
    let to_q: Vec<Vec<Distance>> = short.iter().map(|row| local_closure(row, &closure)).collect();
    if cfg.check_invariants {
        for (k, &c) in q.iter().enumerate() {
            let (want, _) = oracle::dijkstra_with_hops(g, c, Direction::In);
            for x in 0..n {
                step_check(to_q[x][k] == want[x], "step 5", format!("δ({}, {c}) = {} expected {}", x + 1, to_q[x][k], want[x]))?;
            }
        }
    }
    clock.close(&sim, false);

    let input = QSinkInput {
        q: &q,
        to_q: &to_q,
        params: &cfg.qsink,
        blocker: &cfg.blocker,
        mode: cfg.mode,
        schedule: cfg.schedule,
        check: cfg.check_invariants,
    };
    let qsink = sim.scoped("step6", |sim| run_qsink(sim, &input)).map_err(Error::step("step 6"))?;
    clock.close(&sim, false);

    let local = cfg.extension_seed_local.then_some(&trees);
    let mut distances = DistanceMatrix::new(n);
    sim.scoped("step7", |sim| {
        for x in g.nodes() {
            let mut seeds = vec![Distance::INF; n];
            if let Some(t) = local.and_then(|c| c.tree_of(x)) {
                for v in t.members() {
                    seeds[v.index()] = t.get(v).expect("member").dist;
                }
            }
            for (k, &c) in q.iter().enumerate() {
                seeds[c.index()] = seeds[c.index()].min(qsink.known[k][x.index()]);
            }
            seeds[x.index()] = Distance::ZERO;
            let row = h_hop_extension(sim, &seeds, h)?;
            for (t, d) in row.into_iter().enumerate() {
                distances.set(x, NodeId::from_index(t), d);
            }
        }
        Ok(())
    })
    .map_err(Error::step("step 7"))?;
    step_check(clock_rounds(&sim, &clock) == h as u64 * n as u64, "step 7", "extension rounds differ from h·n".into())?;
    clock.close(&sim, false);

    finish(g, cfg, sim, clock, distances, h, q, Some(blocker), Some(qsink), consistency)
}

fn clock_rounds(sim: &Sim, clock: &StepClock) -> u64 {
    sim.metrics().total_rounds() - clock.rounds
}

fn step_check(ok: bool, step: &str, msg: String) -> Result<(), Error> {
    if ok {
        Ok(())
    } else {
        Err(Error::Step { step: step.into(), source: SimError::Invariant(msg) })
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    g: &Graph,
    cfg: &PipelineConfig,
    sim: Sim,
    clock: StepClock,
    distances: DistanceMatrix,
    h: u32,
    q: Vec<NodeId>,
    blocker: Option<BlockerOutcome>,
    qsink: Option<QSinkOutcome>,
    consistency: ConsistencyReport,
) -> Result<PipelineOutcome, Error> {
    if cfg.check_invariants {
        if let Some((x, t, got, want)) = distances.first_mismatch(&oracle::dijkstra_apsp(g)) {
            return Err(Error::Step {
                step: "result".into(),
                source: SimError::Invariant(format!("δ({x}, {t}) computed as {got}, expected {want}")),
            });
        }
    }
    Ok(PipelineOutcome { distances, metrics: sim.into_metrics(), steps: clock.steps, h, q, blocker, qsink, consistency })
}

/// Every node learns `δ(c, c')` for all `c, c' ∈ Q`. Node `c` holds its own row
/// (from its membership in each in-tree) and contributes it to one all-to-all.
pub fn broadcast_blocker_matrix(sim: &mut Sim, q: &[NodeId], short: &[Vec<Distance>]) -> Result<Vec<Vec<Distance>>, SimError> {
    let n = sim.n();
    let mut items = vec![Vec::new(); n];
    for (a, &c) in q.iter().enumerate() {
        for (b, d) in short[c.index()].iter().enumerate() {
            if let Some(d) = d.value() {
                items[c.index()].push((a as u64, b as u64, d));
            }
        }
    }
    let expected: usize = items.iter().map(Vec::len).sum();
    let got = all_to_all(sim, items)?;
    ensure!(got.len() == expected, "matrix broadcast delivered {} of {expected} entries", got.len());
    let mut m = vec![vec![Distance::INF; q.len()]; q.len()];
    for (a, b, d) in got {
        m[a as usize][b as usize] = Distance::finite(d);
    }
    Ok(m)
}

/// `δ(x, c) = min(δ_h(x, c), min over c₁ of δ_h(x, c₁) + D(c₁, c))` with `D` the
/// closed blocker matrix; purely local.
pub fn local_closure(short: &[Distance], closure: &[Vec<Distance>]) -> Vec<Distance> {
    (0..short.len())
        .map(|c| {
            let via = short.iter().zip(closure).map(|(&d1, row)| d1.add(row[c])).min().unwrap_or(Distance::INF);
            short[c].min(via)
        })
        .collect()
}

struct Extend<'g> {
    g: &'g Graph,
    me: NodeId,
    best: Distance,
    changed: bool,
    budget: u64,
    round: u64,
}

impl NodeProgram for Extend<'_> {
    type Msg = u64;

    fn step(&mut self, round: u64, inbox: &[(NodeId, u64)], out: &mut Outbox<u64>) {
        self.round = round;
        for &(from, d) in inbox {
            let w: Weight = self.g.weight(from, self.me).expect("edge");
            let cand = Distance::finite(d).plus(w);
            if cand < self.best {
                self.best = cand;
                self.changed = true;
            }
        }
        if self.changed && round <= self.budget {
            if let Some(d) = self.best.value() {
                for &(w, _) in self.g.out_edges(self.me) {
                    out.send(w, d);
                }
            }
        }
        self.changed = false;
    }

    fn is_done(&self) -> bool {
        self.round > self.budget
    }
}

/// `h` rounds of relaxation from the given per-node starting values; returns
/// what every node holds at the end.
pub fn h_hop_extension(sim: &mut Sim, seeds: &[Distance], h: u32) -> Result<Vec<Distance>, SimError> {
    let g = sim.graph();
    let mut progs: Vec<Extend> = g
        .nodes()
        .map(|me| Extend { g, me, best: seeds[me.index()], changed: seeds[me.index()].is_finite(), budget: h as u64, round: 0 })
        .collect();
    let rounds = sim.run("relax", &mut progs, Some(h as u64 + 1))?;
    ensure!(rounds == h as u64, "relaxation ran {rounds} rounds instead of {h}");
    Ok(progs.into_iter().map(|p| p.best).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn graph(n: usize, directed: bool, edges: &[(u32, u32, u64)]) -> Graph {
        let edges = edges.iter().map(|&(u, v, w)| Edge { src: NodeId(u), dst: NodeId(v), weight: w }).collect();
        Graph::new(n, directed, edges).unwrap()
    }

    fn cfg(h: u32) -> PipelineConfig {
        PipelineConfig { h: Some(h), ..PipelineConfig::default() }
    }

    #[test]
    fn p3_h1() {
        let g = graph(3, false, &[(1, 2, 1), (2, 3, 1)]);
        let out = run_apsp(&g, &cfg(1)).unwrap();
        let rows: Vec<Vec<Option<u64>>> = g.nodes().map(|x| out.distances.row(x).iter().map(|d| d.value()).collect()).collect();
        assert_eq!(rows, vec![vec![Some(0), Some(1), Some(2)], vec![Some(1), Some(0), Some(1)], vec![Some(2), Some(1), Some(0)]]);
        assert_eq!(out.steps.len(), 7);
    }

    #[test]
    fn triangle_shortcut() {
        let g = graph(3, true, &[(1, 2, 1), (2, 3, 1), (1, 3, 5)]);
        let out = run_apsp(&g, &cfg(1)).unwrap();
        assert_eq!(out.distances.get(NodeId(1), NodeId(3)), Distance::finite(2));
    }

    #[test]
    fn closure_example() {
        // δ_h(x,a)=3, D(a,b)=2, δ_h(x,b)=∞
        let closure = vec![vec![Distance::ZERO, Distance::finite(2)], vec![Distance::INF, Distance::ZERO]];
        let got = local_closure(&[Distance::finite(3), Distance::INF], &closure);
        assert_eq!(got[1], Distance::finite(5));
        assert!(local_closure(&[], &[]).is_empty());
    }

    #[test]
    fn extension_from_seed() {
        let g = graph(2, true, &[(1, 2, 2)]);
        let mut sim = Sim::new(&g, EngineConfig::default());
        let got = h_hop_extension(&mut sim, &[Distance::finite(5), Distance::INF], 1).unwrap();
        assert_eq!(got[1], Distance::finite(7));
    }

    #[test]
    fn bad_hop_bound() {
        let g = graph(3, false, &[(1, 2, 1), (2, 3, 1)]);
        assert!(matches!(run_apsp(&g, &cfg(0)), Err(Error::Config(_))));
        assert!(matches!(run_apsp(&g, &cfg(3)), Err(Error::Config(_))));
    }
}
