//! Pairwise-independent sample spaces and the leader-driven search for a good
//! selection among their points.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::blocker::Params;
use crate::csssp::{collect_ancestors, TreeCollection};
use crate::engine::{aggregate_nu, broadcast_k, Sim};
use crate::error::{ensure, SimError};
use crate::fraction::{big, big_int, pow};
use crate::graph::NodeId;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Xor,
    Prime,
}

/// An enumerable family of 0/1 assignments `X_v`, indexed by `μ ∈ [0, size)`.
pub trait SampleSpace {
    fn kind(&self) -> SpaceKind;
    fn size(&self) -> u64;
    fn indicator(&self, mu: u64, v: NodeId) -> bool;
}

/// `X_v(z)` is the parity of `enc(v) & z` over `l`-bit strings, with
/// `enc(v) = 2v + 1`; uniform marginals, pairwise independent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XorSpace {
    pub n: usize,
    pub l: u32,
}

impl XorSpace {
    pub fn new(n: usize) -> XorSpace {
        assert!(n >= 1);
        let mut l = 1;
        while (1u64 << l) <= 2 * n as u64 {
            l += 1;
        }
        XorSpace { n, l }
    }

    pub fn encode(&self, v: NodeId) -> u64 {
        2 * v.0 as u64 + 1
    }
}

impl SampleSpace for XorSpace {
    fn kind(&self) -> SpaceKind {
        SpaceKind::Xor
    }

    fn size(&self) -> u64 {
        1 << self.l
    }

    fn indicator(&self, mu: u64, v: NodeId) -> bool {
        (self.encode(v) & mu).count_ones() % 2 == 1
    }
}

/// Largest prime modulus accepted; bounds the space at about 16.8M points.
pub const MAX_PRIME: u64 = 4099;

/// `X_v(a, b) = [(a·v + b) mod q < c]` over all `(a, b) ∈ Z_q²`, enumerated as
/// `μ = a·q + b`. Marginals are `c/q` and any two distinct ids below `q` are
/// exactly independent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimeSpace {
    pub q: u64,
    pub c: u64,
}

fn is_prime(x: u64) -> bool {
    x >= 2 && (2..).take_while(|d| d * d <= x).all(|d| !x.is_multiple_of(d))
}

impl PrimeSpace {
    /// `q` is the smallest prime above `max(n, ⌈1/p⌉)`; `c = round(p·q)`,
    /// halves rounded up.
    pub fn new(n: usize, p: &BigRational) -> Result<PrimeSpace, SimError> {
        if *p <= BigRational::zero() || *p > BigRational::new(BigInt::one(), BigInt::from(2)) {
            return Err(SimError::Config(format!("selection probability {p} outside (0, 1/2]")));
        }
        let inv = (BigRational::one() / p).ceil().to_integer().to_u64().unwrap_or(u64::MAX);
        let mut q = inv.max(n as u64) + 1;
        while !is_prime(q) {
            q += 1;
            if q > MAX_PRIME {
                break;
            }
        }
        if q > MAX_PRIME {
            return Err(SimError::Config(format!("selection probability {p} needs a modulus above {MAX_PRIME}")));
        }
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let c = (p * big_int(q) + half).floor().to_integer().to_u64().expect("small");
        if c == 0 {
            return Err(SimError::Config(format!("selection probability {p} rounds to zero at modulus {q}")));
        }
        Ok(PrimeSpace { q, c })
    }
}

impl SampleSpace for PrimeSpace {
    fn kind(&self) -> SpaceKind {
        SpaceKind::Prime
    }

    fn size(&self) -> u64 {
        self.q * self.q
    }

    fn indicator(&self, mu: u64, v: NodeId) -> bool {
        let (a, b) = (mu / self.q, mu % self.q);
        (a * v.0 as u64 + b) % self.q < self.c
    }
}

/// Per-leaf coverage for one sample point: how many of the paths ending at this
/// node contain a selected node. `selected` is indexed by node.
pub fn sigma_local(pi_paths: &[Vec<NodeId>], pij_paths: &[Vec<NodeId>], selected: &[bool]) -> (u64, u64) {
    let hit = |p: &Vec<NodeId>| p.iter().any(|v| selected[v.index()]);
    (pi_paths.iter().filter(|p| hit(p)).count() as u64, pij_paths.iter().filter(|p| hit(p)).count() as u64)
}

/// Whether a selection `A` is good: it covers at least
/// `|A|·(1+ε)^i·(1-3δ-ε)` paths of `P_i` and at least a `δ/2` fraction of `P_ij`.
#[allow(clippy::too_many_arguments)]
pub fn is_good_set(
    a_size: u64,
    cov_pi: u64,
    cov_pij: u64,
    i: u32,
    _j: u32,
    _pi_size: u64,
    pij_size: u64,
    params: &Params,
) -> bool {
    let eps = big(&params.epsilon);
    let delta = big(&params.delta);
    let one = BigRational::one();
    let per_node = pow(&(&one + &eps), i) * (&one - big_int(3) * &delta - &eps);
    let first = big_int(cov_pi) >= big_int(a_size) * per_node;
    let second = big_int(cov_pij) * big_int(2) >= delta * big_int(pij_size);
    first && second
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DerandReport {
    pub space_kind: SpaceKind,
    pub space_size: u64,
    pub chosen_mu: u64,
    pub good_flag: bool,
}

/// What the leader needs to judge sample points in stage `i`, phase `j`.
pub struct Selection<'a> {
    pub trees: &'a TreeCollection,
    /// Root-path count of `V_i` members, per tree and node (from the `β` pass).
    pub beta: &'a [Vec<Option<u64>>],
    /// Smallest `β` that puts a path into `P_ij`.
    pub pij_min: u64,
    pub v_i: &'a [NodeId],
    pub i: u32,
    pub j: u32,
    pub pi_size: u64,
    pub pij_size: u64,
    pub params: &'a Params,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoodPoint {
    pub selected: Vec<NodeId>,
    pub report: DerandReport,
    /// Leader totals `(ν_Pi, ν_Pij)` per sample point.
    pub nu: Vec<(u64, u64)>,
}

/// One node path per entry.
pub type Paths = Vec<Vec<NodeId>>;

/// Paths ending at each node, split into `(P_i, P_ij)`, gathered by running the
/// ancestor collection on every tree that has a leaf in `P_i`.
pub fn leaf_paths(sim: &mut Sim, sel: &Selection) -> Result<Vec<(Paths, Paths)>, SimError> {
    let h = sel.trees.hop_bound();
    let n = sel.trees.n();
    let mut out = vec![(Vec::new(), Vec::new()); n];
    for (t, tree) in sel.trees.trees().iter().enumerate() {
        let leaf = |v: NodeId| tree.get(v).is_some_and(|e| e.depth == h) && sel.beta[t][v.index()].unwrap_or(0) >= 1;
        if !tree.members().any(leaf) {
            continue;
        }
        let lists = collect_ancestors(sim, sel.trees, t)?;
        for v in tree.members().filter(|&v| leaf(v)) {
            let path = lists[v.index()].clone().expect("member has a list");
            ensure!(path == tree.path_from_root(v), "ancestor list at {v} disagrees with tree {}", tree.root());
            if sel.beta[t][v.index()].unwrap_or(0) >= sel.pij_min {
                out[v.index()].1.push(path.clone());
            }
            out[v.index()].0.push(path);
        }
    }
    Ok(out)
}

/// Exhaustive search over `space`: every node computes its coverage for every
/// point, the totals are pipelined to the leader, the leader takes the first
/// good point (or the best-covering one if none is good) and broadcasts the
/// selected ids.
pub fn find_good_point(sim: &mut Sim, space: &dyn SampleSpace, sel: &Selection) -> Result<GoodPoint, SimError> {
    let n = sel.trees.n();
    let paths = leaf_paths(sim, sel)?;
    let m = space.size();
    let mut in_vi = vec![false; n];
    for v in sel.v_i {
        in_vi[v.index()] = true;
    }
    let mut sigma = vec![Vec::with_capacity(m as usize); n];
    let mut a_size = Vec::with_capacity(m as usize);
    let mut selected = vec![false; n];
    for mu in 0..m {
        for v in 0..n {
            selected[v] = in_vi[v] && space.indicator(mu, NodeId::from_index(v));
        }
        a_size.push(selected.iter().filter(|&&s| s).count() as u64);
        for (v, (pi, pij)) in paths.iter().enumerate() {
            sigma[v].push(sigma_local(pi, pij, &selected));
        }
    }
    let tree = sim.leader_tree()?;
    let nu = aggregate_nu(sim, &tree, &sigma)?;
    let good = |mu: usize| {
        is_good_set(a_size[mu], nu[mu].0, nu[mu].1, sel.i, sel.j, sel.pi_size, sel.pij_size, sel.params)
    };
    let (chosen, good_flag) = match (0..m as usize).find(|&mu| good(mu)) {
        Some(mu) => (mu, true),
        None => {
            let best = (0..m as usize)
                .max_by_key(|&mu| (nu[mu].1, nu[mu].0, std::cmp::Reverse(mu)))
                .expect("nonempty space");
            (best, false)
        }
    };
    let chosen_set: Vec<NodeId> =
        sel.v_i.iter().copied().filter(|&v| space.indicator(chosen as u64, v)).collect();
    let ids: Vec<u64> = chosen_set.iter().map(|v| v.0 as u64).collect();
    broadcast_k(sim, tree.root, &ids)?;
    Ok(GoodPoint {
        selected: chosen_set,
        report: DerandReport { space_kind: space.kind(), space_size: m, chosen_mu: chosen as u64, good_flag },
        nu,
    })
}
