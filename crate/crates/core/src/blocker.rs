//! Blocker-set selection: a node set meeting every depth-`h` root-to-leaf path
//! of a tree collection, chosen stage by stage (score level `i`) and phase by
//! phase (paths with many high-score nodes first).

use std::collections::BTreeMap;

use num_rational::{BigRational, Rational64};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csssp::{down_pass, remove_subtrees, up_pass, TreeCollection};
use crate::derand::{find_good_point, is_good_set, DerandReport, PrimeSpace, SampleSpace, Selection};
use crate::engine::{all_to_all, Sim};
use crate::error::{ensure, SimError};
use crate::fraction::{big, big_int, ceil_log, ceil_to_u64, format_fraction, pow, to_f64};
use crate::graph::NodeId;
use crate::oracle;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Params {
    pub epsilon: Rational64,
    pub delta: Rational64,
    /// Take a single heavy node when one exists. Turning this off forces every
    /// selection step through the sampling branch.
    pub heavy_check: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params { epsilon: Rational64::new(1, 12), delta: Rational64::new(1, 12), heavy_check: true }
    }
}

impl Params {
    pub fn validate(&self) -> Result<(), String> {
        let cap = Rational64::new(1, 12);
        for (name, v) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if v <= Rational64::from_integer(0) || v > cap {
                return Err(format!("{name} = {} must lie in (0, 1/12]", format_fraction(&v)));
            }
        }
        Ok(())
    }

    fn growth(&self) -> BigRational {
        BigRational::one() + big(&self.epsilon)
    }

    /// `⌈(1+ε)^k⌉`: an integer count meets the real threshold iff it meets this.
    fn level(&self, k: u32) -> u64 {
        ceil_to_u64(&pow(&self.growth(), k))
    }

    pub fn stage_count(&self, n: usize) -> u32 {
        let n2 = (n as u64) * (n as u64);
        ceil_log(&self.growth(), &big_int(n2)).max(1)
    }

    pub fn phase_count(&self, h: u32) -> u32 {
        ceil_log(&self.growth(), &big_int(h as u64)).max(1)
    }

    /// Upper bound on selection steps for `n` nodes and hop bound `h`.
    pub fn selection_envelope(&self, n: usize, h: u32) -> u64 {
        let d = to_f64(&big(&self.delta));
        let per_phase = ((1.0 + to_f64(&big(&self.epsilon))) * ((n * n) as f64).ln() / (d * d * d)).ceil().max(1.0);
        self.stage_count(n) as u64 * self.phase_count(h) as u64 * per_phase as u64
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Mode {
    Deterministic,
    Randomized { seed: u64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Heavy,
    Derandomized,
    Sampled,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub stage: u32,
    pub phase: u32,
    pub branch: Branch,
    pub pij_before: u64,
    pub pij_after: u64,
    pub added: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockerOutcome {
    pub q: Vec<NodeId>,
    pub selection_steps: u64,
    pub heavy_selections: u64,
    pub envelope: u64,
    pub trace: Vec<TraceRecord>,
    pub derand: Vec<DerandReport>,
    /// Some selection step fell back to a point that was not good.
    pub fallback_used: bool,
    /// Times the light-case lower bound on `|V_i|` was checked.
    pub light_checks: u64,
}

/// Number of depth-`h` paths through each node, summed over the trees; one
/// fixed-schedule convergecast per tree.
pub fn compute_scores(sim: &mut Sim, trees: &TreeCollection) -> Result<Vec<u64>, SimError> {
    let h = trees.hop_bound();
    let n = trees.n();
    let mut score = vec![0; n];
    for tree in trees.trees() {
        if tree.is_empty() {
            continue;
        }
        let leaves: Vec<u64> = (0..n).map(|i| tree.get(NodeId::from_index(i)).is_some_and(|e| e.depth == h) as u64).collect();
        let sums = up_pass(sim, "scores", tree, h, &leaves)?;
        for (s, add) in score.iter_mut().zip(sums) {
            *s += add;
        }
    }
    Ok(score)
}

/// Makes every positive per-node value known everywhere; returns the full table.
fn share(sim: &mut Sim, phase: &str, values: &[u64]) -> Result<Vec<u64>, SimError> {
    let items: Vec<Vec<(u64, u64)>> =
        values.iter().enumerate().map(|(i, &v)| if v > 0 { vec![(i as u64 + 1, v)] } else { vec![] }).collect();
    let got = sim.scoped(phase, |sim| all_to_all(sim, items))?;
    let mut table = vec![0; values.len()];
    for (id, v) in got {
        table[id as usize - 1] = v;
    }
    Ok(table)
}

/// `V_i` from a score table every node holds: scores of at least `(1+ε)^(i-1)`.
pub fn v_i(scores: &[u64], i: u32, params: &Params) -> Vec<NodeId> {
    let t = params.level(i - 1);
    (0..scores.len()).filter(|&k| scores[k] >= t).map(NodeId::from_index).collect()
}

/// `V_i` with its members announced through an all-to-all broadcast.
pub fn compute_vi(sim: &mut Sim, scores: &[u64], i: u32, params: &Params) -> Result<Vec<NodeId>, SimError> {
    let mine = v_i(scores, i, params);
    let items: Vec<Vec<u64>> =
        (0..scores.len()).map(|k| if mine.contains(&NodeId::from_index(k)) { vec![k as u64 + 1] } else { vec![] }).collect();
    let got = sim.scoped("v_i", |sim| all_to_all(sim, items))?;
    Ok(got.into_iter().map(|id| NodeId(id as u32)).collect())
}

/// Per tree, the number of `V_i` members on each member's root path.
pub fn beta_pass(sim: &mut Sim, trees: &TreeCollection, members: &[NodeId]) -> Result<Vec<Vec<Option<u64>>>, SimError> {
    let n = trees.n();
    let mut contrib = vec![0; n];
    for v in members {
        contrib[v.index()] = 1;
    }
    trees.trees().iter().map(|t| down_pass(sim, "path-counts", t, trees.hop_bound(), &contrib)).collect()
}

/// Depth-`h` leaf flags per tree: whether the leaf's path meets `V_i`.
pub fn compute_pi(sim: &mut Sim, trees: &TreeCollection, members: &[NodeId]) -> Result<Vec<Vec<Option<bool>>>, SimError> {
    leaf_flags(sim, trees, members, 1)
}

/// Depth-`h` leaf flags per tree: whether the leaf's path holds at least
/// `(1+ε)^(j-1)` members of `V_i`.
pub fn compute_pij(
    sim: &mut Sim,
    trees: &TreeCollection,
    members: &[NodeId],
    j: u32,
    params: &Params,
) -> Result<Vec<Vec<Option<bool>>>, SimError> {
    leaf_flags(sim, trees, members, params.level(j - 1))
}

fn leaf_flags(sim: &mut Sim, trees: &TreeCollection, members: &[NodeId], min: u64) -> Result<Vec<Vec<Option<bool>>>, SimError> {
    let beta = beta_pass(sim, trees, members)?;
    let h = trees.hop_bound();
    Ok(trees
        .trees()
        .iter()
        .zip(beta)
        .map(|(t, b)| {
            (0..trees.n())
                .map(|i| {
                    let e = t.get(NodeId::from_index(i))?;
                    (e.depth == h).then(|| b[i].unwrap_or(0) >= min)
                })
                .collect()
        })
        .collect())
}

/// `|P_ij|` from per-leaf flags: each node announces how many flagged paths end
/// at it, and every node adds up the announcements.
pub fn compute_pij_size(sim: &mut Sim, flags: &[Vec<Option<bool>>]) -> Result<u64, SimError> {
    let n = flags.first().map_or(0, Vec::len);
    let per_node: Vec<u64> = (0..n).map(|i| flags.iter().filter(|f| f[i] == Some(true)).count() as u64).collect();
    Ok(share(sim, "path-count-sizes", &per_node)?.iter().sum())
}

/// Number of flagged paths through each node, broadcast for the members of
/// `members`.
pub fn compute_scores_ij(
    sim: &mut Sim,
    trees: &TreeCollection,
    flags: &[Vec<Option<bool>>],
    members: &[NodeId],
) -> Result<Vec<u64>, SimError> {
    let n = trees.n();
    let mut score = vec![0; n];
    for (tree, f) in trees.trees().iter().zip(flags) {
        if !f.contains(&Some(true)) {
            continue;
        }
        let leaves: Vec<u64> = f.iter().map(|x| (*x == Some(true)) as u64).collect();
        let sums = up_pass(sim, "scores-ij", tree, trees.hop_bound(), &leaves)?;
        for (s, add) in score.iter_mut().zip(sums) {
            *s += add;
        }
    }
    let mut mine = vec![0; n];
    for v in members {
        mine[v.index()] = score[v.index()];
    }
    share(sim, "scores-ij-broadcast", &mine)
}

/// Global histogram of root-path `V_i` counts over depth-`h` leaves, gathered by
/// an all-to-all of per-node `(β, count)` pairs. Everyone can then read off
/// `|P_i|` and every `|P_ij|` locally.
fn beta_histogram(sim: &mut Sim, trees: &TreeCollection, beta: &[Vec<Option<u64>>]) -> Result<BTreeMap<u64, u64>, SimError> {
    let h = trees.hop_bound();
    let n = trees.n();
    let mut items = vec![Vec::new(); n];
    for (v, slot) in items.iter_mut().enumerate() {
        let mut local: BTreeMap<u64, u64> = BTreeMap::new();
        for (t, b) in trees.trees().iter().zip(beta) {
            if t.get(NodeId::from_index(v)).is_some_and(|e| e.depth == h) {
                let k = b[v].unwrap_or(0);
                if k > 0 {
                    *local.entry(k).or_default() += 1;
                }
            }
        }
        *slot = local.into_iter().map(|(k, c)| (v as u64 + 1, k, c)).collect();
    }
    let got = sim.scoped("path-count-sizes", |sim| all_to_all(sim, items))?;
    let mut hist = BTreeMap::new();
    for (_, k, c) in got {
        *hist.entry(k).or_default() += c;
    }
    Ok(hist)
}

fn paths_at_least(hist: &BTreeMap<u64, u64>, min: u64) -> u64 {
    hist.range(min..).map(|(_, c)| c).sum()
}

struct Level {
    members: Vec<NodeId>,
    beta: Vec<Vec<Option<u64>>>,
    hist: BTreeMap<u64, u64>,
}

/// Computes a blocker set for `trees`. The returned set meets every depth-`h`
/// root-to-leaf path of the collection as given.
pub fn run_blocker(sim: &mut Sim, trees: &TreeCollection, params: &Params, mode: Mode) -> Result<BlockerOutcome, SimError> {
    params.validate().map_err(SimError::Config)?;
    let n = trees.n();
    let h = trees.hop_bound();
    let mut work = trees.clone();
    let mut rng = match mode {
        Mode::Randomized { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Deterministic => None,
    };
    let mut out = BlockerOutcome {
        q: Vec::new(),
        selection_steps: 0,
        heavy_selections: 0,
        envelope: params.selection_envelope(n, h),
        trace: Vec::new(),
        derand: Vec::new(),
        fallback_used: false,
        light_checks: 0,
    };
    let mut scores = compute_scores(sim, &work)?;
    scores = share(sim, "scores-broadcast", &scores)?;
    let mut level: Option<Level> = None;

    for i in (1..=params.stage_count(n)).rev() {
        let members = v_i(&scores, i, params);
        if members.is_empty() {
            continue;
        }
        if level.as_ref().is_none_or(|l| l.members != members) {
            level = Some(build_level(sim, &work, members)?);
        }
        for j in (1..=params.phase_count(h)).rev() {
            let pij_min = params.level(j - 1);
            loop {
                let lv = level.as_ref().expect("built above");
                let pij_before = paths_at_least(&lv.hist, pij_min);
                if pij_before == 0 {
                    break;
                }
                out.selection_steps += 1;
                ensure!(
                    out.selection_steps <= out.envelope,
                    "selection steps exceed the envelope of {}",
                    out.envelope
                );
                let (added, branch) = select(sim, &work, lv, i, j, pij_min, pij_before, params, &mut rng, &mut out)?;
                ensure!(!added.is_empty(), "stage {i} phase {j}: selection step chose nothing");
                for &v in &added {
                    ensure!(!out.q.contains(&v), "node {v} selected twice");
                    out.q.push(v);
                }
                remove_subtrees(sim, &mut work, &added)?;
                scores = compute_scores(sim, &work)?;
                scores = share(sim, "scores-broadcast", &scores)?;
                let members = v_i(&scores, i, params);
                level = Some(build_level(sim, &work, members)?);
                let pij_after = paths_at_least(&level.as_ref().expect("set").hist, pij_min);
                ensure!(
                    pij_after < pij_before,
                    "stage {i} phase {j}: |P_ij| did not shrink ({pij_before} -> {pij_after})"
                );
                out.trace.push(TraceRecord { stage: i, phase: j, branch, pij_before, pij_after, added });
            }
        }
    }

    let uncovered = oracle::uncovered_paths(trees, h, &out.q);
    ensure!(uncovered == 0, "blocker set misses {uncovered} depth-{h} paths");
    Ok(out)
}

fn build_level(sim: &mut Sim, work: &TreeCollection, members: Vec<NodeId>) -> Result<Level, SimError> {
    if members.is_empty() {
        return Ok(Level { members, beta: Vec::new(), hist: BTreeMap::new() });
    }
    let beta = beta_pass(sim, work, &members)?;
    let hist = beta_histogram(sim, work, &beta)?;
    Ok(Level { members, beta, hist })
}

#[allow(clippy::too_many_arguments)]
fn select(
    sim: &mut Sim,
    work: &TreeCollection,
    lv: &Level,
    i: u32,
    j: u32,
    pij_min: u64,
    pij_size: u64,
    params: &Params,
    rng: &mut Option<ChaCha8Rng>,
    out: &mut BlockerOutcome,
) -> Result<(Vec<NodeId>, Branch), SimError> {
    let h = work.hop_bound();
    let flags: Vec<Vec<Option<bool>>> = work
        .trees()
        .iter()
        .zip(&lv.beta)
        .map(|(t, b)| {
            (0..work.n())
                .map(|v| {
                    let e = t.get(NodeId::from_index(v))?;
                    (e.depth == h).then(|| b[v].unwrap_or(0) >= pij_min)
                })
                .collect()
        })
        .collect();
    let pi_size = paths_at_least(&lv.hist, 1);

    if params.heavy_check {
        let score_ij = compute_scores_ij(sim, work, &flags, &lv.members)?;
        let best = lv.members.iter().copied().max_by_key(|v| (score_ij[v.index()], std::cmp::Reverse(*v)));
        let growth = BigRational::one() + big(&params.epsilon);
        let delta3 = pow(&big(&params.delta), 3);
        if let Some(c) = best {
            if big_int(score_ij[c.index()]) * &growth > &delta3 * big_int(pij_size) {
                out.heavy_selections += 1;
                return Ok((vec![c], Branch::Heavy));
            }
        }
        // no heavy node: V_i must then be large
        out.light_checks += 1;
        let needed = pow(&growth, j) / delta3;
        ensure!(
            big_int(lv.members.len() as u64) >= needed,
            "stage {i} phase {j}: no heavy node yet |V_i| = {} is below (1+eps)^j/delta^3",
            lv.members.len()
        );
    }

    let p = big(&params.delta) / pow(&(BigRational::one() + big(&params.epsilon)), j);
    let space = PrimeSpace::new(work.n(), &p)?;
    let sel = Selection {
        trees: work,
        beta: &lv.beta,
        pij_min,
        v_i: &lv.members,
        i,
        j,
        pi_size,
        pij_size,
        params,
    };
    if let Some(rng) = rng {
        for _ in 0..RANDOM_ATTEMPTS {
            let mu = rng.random_range(0..space.size());
            let chosen: Vec<NodeId> = lv.members.iter().copied().filter(|&v| space.indicator(mu, v)).collect();
            if sampled_is_good(sim, work, &lv.beta, &flags, &chosen, &sel)? {
                return Ok((chosen, Branch::Sampled));
            }
        }
    }
    let point = sim.scoped("derand", |sim| find_good_point(sim, &space, &sel))?;
    let branch = if point.report.good_flag { Branch::Derandomized } else { Branch::Fallback };
    out.fallback_used |= !point.report.good_flag;
    out.derand.push(point.report);
    Ok((point.selected, branch))
}

/// Draws per selection step in randomized mode before handing over to the
/// deterministic search.
pub const RANDOM_ATTEMPTS: usize = 32;

/// Announces a sampled set, then measures its coverage with one root-to-leaf
/// pass per tree and a global sum of the per-leaf hits.
fn sampled_is_good(
    sim: &mut Sim,
    work: &TreeCollection,
    beta: &[Vec<Option<u64>>],
    flags: &[Vec<Option<bool>>],
    chosen: &[NodeId],
    sel: &Selection,
) -> Result<bool, SimError> {
    let n = work.n();
    let items: Vec<Vec<u64>> =
        (0..n).map(|k| if chosen.contains(&NodeId::from_index(k)) { vec![k as u64 + 1] } else { vec![] }).collect();
    sim.scoped("sampled-set", |sim| all_to_all(sim, items))?;
    let mut contrib = vec![0; n];
    for v in chosen {
        contrib[v.index()] = 1;
    }
    let mut per_node = vec![(0u64, 0u64); n];
    for (t, tree) in work.trees().iter().enumerate() {
        if !flags[t].iter().any(Option::is_some) {
            continue;
        }
        let hits = down_pass(sim, "sampled-coverage", tree, work.hop_bound(), &contrib)?;
        for v in 0..n {
            if flags[t][v].is_some() && beta[t][v].unwrap_or(0) >= 1 && hits[v].unwrap_or(0) > 0 {
                per_node[v].0 += 1;
                per_node[v].1 += (flags[t][v] == Some(true)) as u64;
            }
        }
    }
    let items: Vec<Vec<(u64, u64, u64)>> = per_node
        .iter()
        .enumerate()
        .map(|(v, &(a, b))| if a > 0 { vec![(v as u64 + 1, a, b)] } else { vec![] })
        .collect();
    let got = sim.scoped("sampled-coverage-sum", |sim| all_to_all(sim, items))?;
    let (cov_pi, cov_pij) = got.iter().fold((0, 0), |acc, &(_, a, b)| (acc.0 + a, acc.1 + b));
    Ok(is_good_set(chosen.len() as u64, cov_pi, cov_pij, sel.i, sel.j, sel.pi_size, sel.pij_size, sel.params))
}

/// `3·⌈(n/h)·ln(n²+1)⌉`: the size the sampling analysis promises, before heavy
/// picks are added.
pub fn size_bound(n: usize, h: u32) -> u64 {
    let nn = n as f64;
    3 * ((nn / h as f64) * (nn * nn + 1.0).ln()).ceil() as u64
}
