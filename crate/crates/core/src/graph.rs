//! Directed/undirected weighted graphs, generators and the two ingestion formats
//! (DIMACS shortest-path and a small JSON schema).
//!
//! Nodes are always numbered `1..=n`. Weights are nonnegative integers bounded by
//! [`MAX_WEIGHT`] so that every distance fits in a `u64` and oracle comparisons
//! can be exact.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Largest accepted edge weight.
pub const MAX_WEIGHT: u64 = 1 << 32;
/// Largest node count accepted from any input.
pub const MAX_NODES: usize = 1 << 20;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> NodeId {
        NodeId(i as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Weight = u64;

/// A path length, or `+inf` for "unreachable".
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distance(u64);

impl Distance {
    pub const INF: Distance = Distance(u64::MAX);
    pub const ZERO: Distance = Distance(0);

    pub fn finite(v: u64) -> Distance {
        assert!(v < u64::MAX, "distance overflow");
        Distance(v)
    }

    pub fn is_finite(self) -> bool {
        self.0 != u64::MAX
    }

    pub fn value(self) -> Option<u64> {
        self.is_finite().then_some(self.0)
    }

    /// `self + w`, staying infinite when `self` is.
    pub fn plus(self, w: Weight) -> Distance {
        if self.is_finite() {
            Distance::finite(self.0 + w)
        } else {
            Distance::INF
        }
    }

    pub fn add(self, other: Distance) -> Distance {
        match (self.value(), other.value()) {
            (Some(a), Some(b)) => Distance::finite(a + b),
            _ => Distance::INF,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("inf"),
        }
    }
}

impl Serialize for Distance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.value() {
            Some(v) => s.serialize_some(&v),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Distance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Option<u64> = Option::deserialize(d)?;
        match v {
            Some(u64::MAX) => Err(serde::de::Error::custom("distance out of range")),
            Some(v) => Ok(Distance(v)),
            None => Ok(Distance::INF),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: Weight,
}

/// A validated graph. For undirected graphs `edges` lists each edge once with
/// `src < dst`; the adjacency lists contain both directions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<(NodeId, Weight)>>,
    in_adj: Vec<Vec<(NodeId, Weight)>>,
    channels: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds and validates a graph: ids in `1..=n`, no self-loops, no duplicate
    /// ordered pairs, weights within bounds, connected underlying graph.
    pub fn new(n: usize, directed: bool, edges: Vec<Edge>) -> Result<Graph, GraphError> {
        let g = Graph::build_unchecked(n, directed, edges)?;
        g.check_connected()?;
        Ok(g)
    }

    fn build_unchecked(n: usize, directed: bool, edges: Vec<Edge>) -> Result<Graph, GraphError> {
        if n == 0 {
            return Err(GraphError::Invalid("graph must have at least one node".into()));
        }
        if n > MAX_NODES {
            return Err(GraphError::Invalid(format!("node count {n} too large")));
        }
        let mut seen = BTreeSet::new();
        let mut canon = Vec::with_capacity(edges.len());
        for e in edges {
            for v in [e.src, e.dst] {
                if v.0 == 0 || v.0 as usize > n {
                    return Err(GraphError::Invalid(format!("node id {v} outside 1..={n}")));
                }
            }
            if e.src == e.dst {
                return Err(GraphError::Invalid(format!("self-loop at node {}", e.src)));
            }
            if e.weight > MAX_WEIGHT {
                return Err(GraphError::Invalid(format!(
                    "weight {} on edge ({}, {}) exceeds 2^32",
                    e.weight, e.src, e.dst
                )));
            }
            let key = if directed {
                (e.src, e.dst)
            } else {
                (e.src.min(e.dst), e.src.max(e.dst))
            };
            if !seen.insert(key) {
                return Err(GraphError::Invalid(format!("duplicate edge ({}, {})", e.src, e.dst)));
            }
            canon.push(Edge { src: key.0, dst: key.1, weight: e.weight });
        }
        canon.sort();

        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut channels = vec![BTreeSet::new(); n];
        for e in &canon {
            out_adj[e.src.index()].push((e.dst, e.weight));
            in_adj[e.dst.index()].push((e.src, e.weight));
            if !directed {
                out_adj[e.dst.index()].push((e.src, e.weight));
                in_adj[e.src.index()].push((e.dst, e.weight));
            }
            channels[e.src.index()].insert(e.dst);
            channels[e.dst.index()].insert(e.src);
        }
        for adj in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            adj.sort();
        }
        Ok(Graph {
            n,
            directed,
            edges: canon,
            out_adj,
            in_adj,
            channels: channels.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(GraphError::Disconnected { components: comps.len() });
        }
        Ok(())
    }

    /// Connected components of the underlying undirected graph, each sorted,
    /// ordered by smallest member.
    fn components(&self) -> Vec<Vec<NodeId>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![NodeId::from_index(s)];
            comp[s] = id;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &w in &self.channels[u] {
                    if comp[w.index()] == usize::MAX {
                        comp[w.index()] = id;
                        members.push(w);
                        stack.push(w.index());
                    }
                }
            }
            members.sort();
            out.push(members);
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n).map(NodeId::from_index)
    }

    /// Outgoing `(neighbor, weight)` pairs, sorted by neighbor.
    pub fn out_edges(&self, v: NodeId) -> &[(NodeId, Weight)] {
        &self.out_adj[v.index()]
    }

    /// Incoming `(neighbor, weight)` pairs, sorted by neighbor.
    pub fn in_edges(&self, v: NodeId) -> &[(NodeId, Weight)] {
        &self.in_adj[v.index()]
    }

    /// Neighbors in the underlying undirected graph (communication channels).
    pub fn channels(&self, v: NodeId) -> &[NodeId] {
        &self.channels[v.index()]
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<Weight> {
        let adj = &self.out_adj[u.index()];
        adj.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| adj[i].1)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            n: self.n,
            directed: self.directed,
            edges: self.edges.iter().map(|e| [e.src.0 as u64, e.dst.0 as u64, e.weight]).collect(),
        };
        serde_json::to_string(&doc).expect("graph json")
    }

    pub fn to_dimacs(&self) -> String {
        let mut arcs = Vec::new();
        for e in &self.edges {
            arcs.push((e.src, e.dst, e.weight));
            if !self.directed {
                arcs.push((e.dst, e.src, e.weight));
            }
        }
        arcs.sort();
        let mut s = format!("p sp {} {}\n", self.n, arcs.len());
        for (u, v, w) in arcs {
            s.push_str(&format!("a {u} {v} {w}\n"));
        }
        s
    }
}

/// Channel topology: symmetric edge set, weight = min over both directions.
pub fn underlying_undirected(g: &Graph) -> Graph {
    let mut best: std::collections::BTreeMap<(NodeId, NodeId), Weight> = Default::default();
    for e in &g.edges {
        let key = (e.src.min(e.dst), e.src.max(e.dst));
        let w = best.entry(key).or_insert(e.weight);
        *w = (*w).min(e.weight);
    }
    let edges = best.into_iter().map(|((src, dst), weight)| Edge { src, dst, weight }).collect();
    Graph::build_unchecked(g.n, false, edges).expect("underlying graph of a valid graph is valid")
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    directed: bool,
    edges: Vec<[u64; 3]>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    Dimacs,
    Json,
}

impl GraphFormat {
    /// Guess from file extension: `.json` is JSON, everything else DIMACS.
    pub fn from_path(path: &Path) -> GraphFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => GraphFormat::Json,
            _ => GraphFormat::Dimacs,
        }
    }
}

pub fn load_graph(path: &Path, format: GraphFormat) -> Result<Graph, GraphError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
    match format {
        GraphFormat::Dimacs => parse_dimacs(&text, true),
        GraphFormat::Json => parse_json(&text),
    }
}

pub fn parse_json(text: &str) -> Result<Graph, GraphError> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| GraphError::Parse { line: e.line(), msg: e.to_string() })?;
    let n = doc
        .get("n")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| GraphError::Parse { line: 1, msg: "missing or invalid \"n\"".into() })?;
    let directed = doc
        .get("directed")
        .and_then(|v| v.as_bool())
        .ok_or_else(|| GraphError::Parse { line: 1, msg: "missing or invalid \"directed\"".into() })?;
    let raw = doc
        .get("edges")
        .and_then(|v| v.as_array())
        .ok_or_else(|| GraphError::Parse { line: 1, msg: "missing or invalid \"edges\"".into() })?;
    let mut edges = Vec::with_capacity(raw.len());
    for (k, e) in raw.iter().enumerate() {
        let triple = e.as_array().filter(|a| a.len() == 3).ok_or_else(|| GraphError::Parse {
            line: 1,
            msg: format!("edge {k} is not a [u, v, w] triple"),
        })?;
        let mut vals = [0i64; 3];
        for (slot, v) in vals.iter_mut().zip(triple) {
            *slot = v.as_i64().ok_or_else(|| GraphError::Parse {
                line: 1,
                msg: format!("edge {k} has a non-integer entry"),
            })?;
        }
        edges.push(checked_edge(vals[0], vals[1], vals[2], &format!("edge {k}"))?);
    }
    if n > MAX_NODES as u64 {
        return Err(GraphError::Invalid(format!("node count {n} too large")));
    }
    Graph::new(n as usize, directed, edges)
}

fn checked_edge(u: i64, v: i64, w: i64, ctx: &str) -> Result<Edge, GraphError> {
    if w < 0 {
        return Err(GraphError::NegativeWeight(format!("{ctx}: weight {w}")));
    }
    if u <= 0 || v <= 0 || u > u32::MAX as i64 || v > u32::MAX as i64 {
        return Err(GraphError::Invalid(format!("{ctx}: node ids must be positive")));
    }
    Ok(Edge { src: NodeId(u as u32), dst: NodeId(v as u32), weight: w as u64 })
}

/// Parses DIMACS shortest-path text (`c` comments, one `p sp n m` line, `a u v w`
/// arcs). Arcs are directed; when `directed` is false and every arc has its
/// reverse with the same weight the result is returned as an undirected graph.
pub fn parse_dimacs(text: &str, directed: bool) -> Result<Graph, GraphError> {
    let mut header: Option<(usize, usize)> = None;
    let mut arcs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tok = line.split_whitespace();
        let Some(kind) = tok.next() else { continue };
        let perr = |msg: &str| GraphError::Parse { line: lineno, msg: msg.to_string() };
        match kind {
            "c" => continue,
            "p" => {
                if header.is_some() {
                    return Err(perr("duplicate problem line"));
                }
                if tok.next() != Some("sp") {
                    return Err(perr("expected \"p sp <n> <m>\""));
                }
                let n = tok.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| perr("bad node count"))?;
                let m = tok.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| perr("bad arc count"))?;
                if tok.next().is_some() {
                    return Err(perr("trailing tokens on problem line"));
                }
                if n > MAX_NODES {
                    return Err(perr("node count too large"));
                }
                header = Some((n, m));
            }
            "a" => {
                if header.is_none() {
                    return Err(perr("arc before problem line"));
                }
                let mut nums = [0i64; 3];
                for slot in nums.iter_mut() {
                    *slot = tok.next().and_then(|t| t.parse::<i64>().ok()).ok_or_else(|| perr("expected \"a <u> <v> <w>\""))?;
                }
                if tok.next().is_some() {
                    return Err(perr("trailing tokens on arc line"));
                }
                arcs.push(checked_edge(nums[0], nums[1], nums[2], &format!("line {lineno}"))?);
            }
            _ => return Err(perr(&format!("unknown line type {kind:?}"))),
        }
    }
    let (n, m) = header.ok_or(GraphError::Parse { line: 0, msg: "missing problem line".into() })?;
    if arcs.len() != m {
        return Err(GraphError::Invalid(format!("problem line declares {m} arcs, found {}", arcs.len())));
    }
    if !directed {
        let set: BTreeSet<(NodeId, NodeId, Weight)> = arcs.iter().map(|e| (e.src, e.dst, e.weight)).collect();
        let symmetric = arcs.iter().all(|e| set.contains(&(e.dst, e.src, e.weight)));
        if symmetric {
            let half = arcs.into_iter().filter(|e| e.src < e.dst).collect();
            return Graph::new(n, false, half);
        }
    }
    Graph::new(n, true, arcs)
}

/// Graph generator families.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GenSpec {
    Path { n: usize, w: Weight, directed: bool },
    Cycle { n: usize, w: Weight, directed: bool },
    Star { n: usize, w: Weight, directed: bool },
    Grid { rows: usize, cols: usize, w: Weight, directed: bool },
    Gnp { n: usize, p: f64, wmax: Weight, directed: bool },
}

impl GenSpec {
    /// Parses `family:args[:directed]`, e.g. `path:8`, `path:8:3`, `grid:3x4`,
    /// `gnp:16:0.3:8`, `gnp:16:0.3:8:directed`.
    pub fn parse(s: &str) -> Result<GenSpec, GraphError> {
        let bad = |msg: &str| GraphError::Config(format!("generator {s:?}: {msg}"));
        let mut parts: Vec<&str> = s.split(':').collect();
        let directed = parts.last() == Some(&"directed");
        if directed {
            parts.pop();
        }
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad("expected an integer"));
        let weight = |t: Option<&&str>| -> Result<Weight, GraphError> {
            match t {
                None => Ok(1),
                Some(t) => t.parse::<u64>().map_err(|_| bad("expected an integer weight")),
            }
        };
        let spec = match parts.as_slice() {
            ["path", n, rest @ ..] if rest.len() <= 1 => GenSpec::Path { n: num(n)?, w: weight(rest.first())?, directed },
            ["cycle", n, rest @ ..] if rest.len() <= 1 => GenSpec::Cycle { n: num(n)?, w: weight(rest.first())?, directed },
            ["star", n, rest @ ..] if rest.len() <= 1 => GenSpec::Star { n: num(n)?, w: weight(rest.first())?, directed },
            ["grid", dims, rest @ ..] if rest.len() <= 1 => {
                let (r, c) = dims.split_once('x').ok_or_else(|| bad("grid expects RxC"))?;
                GenSpec::Grid { rows: num(r)?, cols: num(c)?, w: weight(rest.first())?, directed }
            }
            ["gnp", n, p, wmax] => GenSpec::Gnp {
                n: num(n)?,
                p: p.parse::<f64>().map_err(|_| bad("expected a probability"))?,
                wmax: wmax.parse::<u64>().map_err(|_| bad("expected an integer wmax"))?,
                directed,
            },
            _ => return Err(bad("unknown family or wrong arity")),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        if n < 2 {
            return Err(GraphError::Config(format!("generator needs n >= 2, got {n}")));
        }
        if n > MAX_NODES {
            return Err(GraphError::Config(format!("generator node count {n} too large")));
        }
        let w = match *self {
            GenSpec::Path { w, .. } | GenSpec::Cycle { w, .. } | GenSpec::Star { w, .. } | GenSpec::Grid { w, .. } => w,
            GenSpec::Gnp { wmax, .. } => wmax,
        };
        if w > MAX_WEIGHT {
            return Err(GraphError::Config("weight exceeds 2^32".into()));
        }
        if let GenSpec::Gnp { p, .. } = *self {
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::Config(format!("edge probability {p} not in [0, 1]")));
            }
        }
        if let GenSpec::Cycle { n, .. } = *self {
            if n < 3 {
                return Err(GraphError::Config("cycle needs n >= 3".into()));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        match *self {
            GenSpec::Path { n, .. } | GenSpec::Cycle { n, .. } | GenSpec::Star { n, .. } | GenSpec::Gnp { n, .. } => n,
            GenSpec::Grid { rows, cols, .. } => rows.saturating_mul(cols),
        }
    }
}

/// Deterministic for a fixed `(spec, seed)`. `gnp` joins components with extra
/// edges between their smallest members so the result is always connected.
pub fn generate_graph(spec: &GenSpec, seed: u64) -> Result<Graph, GraphError> {
    spec.check()?;
    let id = |i: usize| NodeId::from_index(i);
    let mk = |u: usize, v: usize, w: Weight| Edge { src: id(u), dst: id(v), weight: w };
    let (n, directed, edges) = match *spec {
        GenSpec::Path { n, w, directed } => (n, directed, (0..n - 1).map(|i| mk(i, i + 1, w)).collect()),
        GenSpec::Cycle { n, w, directed } => (n, directed, (0..n).map(|i| mk(i, (i + 1) % n, w)).collect()),
        GenSpec::Star { n, w, directed } => (n, directed, (1..n).map(|i| mk(0, i, w)).collect()),
        GenSpec::Grid { rows, cols, w, directed } => {
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let v = r * cols + c;
                    if c + 1 < cols {
                        edges.push(mk(v, v + 1, w));
                    }
                    if r + 1 < rows {
                        edges.push(mk(v, v + cols, w));
                    }
                }
            }
            (rows * cols, directed, edges)
        }
        GenSpec::Gnp { n, p, wmax, directed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u == v || (!directed && v < u) {
                        continue;
                    }
                    if rng.random_bool(p) {
                        edges.push(mk(u, v, rng.random_range(0..=wmax)));
                    }
                }
            }
            let g = Graph::build_unchecked(n, directed, edges.clone())?;
            let comps = g.components();
            for pair in comps.windows(2) {
                let w = rng.random_range(0..=wmax);
                edges.push(Edge { src: pair[0][0], dst: pair[1][0], weight: w });
                if directed {
                    edges.push(Edge { src: pair[1][0], dst: pair[0][0], weight: w });
                }
            }
            (n, directed, edges)
        }
    };
    Graph::new(n, directed, edges)
}
