//! Communication graphs: generation, queries, and the edge-list text format.
//!
//! Graphs are undirected and simple. Nodes are `0..n`; adjacency is kept as
//! sorted sets so iteration order (and therefore everything downstream of it)
//! is deterministic.

use std::collections::{BTreeSet, VecDeque};
use std::io::{self, BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Undirected simple graph over node ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<BTreeSet<usize>>,
    edge_count: usize,
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self { adj: vec![BTreeSet::new(); n], edge_count: 0 }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.insert(i, j);
            }
        }
        g
    }

    /// Ring lattice: node `i` is joined to the `k/2` nearest nodes on each side.
    pub fn ring_lattice(n: usize, k: usize) -> Result<Self, TopologyError> {
        check_lattice(n, k)?;
        let mut g = Self::empty(n);
        for j in 1..=k / 2 {
            for i in 0..n {
                g.insert(i, (i + j) % n);
            }
        }
        Ok(g)
    }

    /// Star with center 0.
    pub fn star(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 1..n {
            g.insert(0, i);
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Adds the edge `{i, j}`. Returns `Ok(false)` if it was already present.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool, TopologyError> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(TopologyError::SelfLoop(i));
        }
        Ok(self.insert(i, j))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|s| s.contains(&j))
    }

    /// Neighbor set of node `i`.
    pub fn neighbors(&self, i: usize) -> Result<&BTreeSet<usize>, TopologyError> {
        self.check_node(i)?;
        Ok(&self.adj[i])
    }

    pub fn degree(&self, i: usize) -> Result<usize, TopologyError> {
        self.neighbors(i).map(BTreeSet::len)
    }

    /// Edges as `(i, j)` with `i < j`, in ascending lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.range(i + 1..).map(move |&j| (i, j)))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }

    /// `(node, degree)` pairs by degree descending, ties by ascending node id.
    pub fn degree_sequence(&self) -> Vec<(usize, usize)> {
        let mut seq: Vec<_> = self.adj.iter().map(BTreeSet::len).enumerate().collect();
        seq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        seq
    }

    /// Writes the graph as `n <count>` followed by one `i j` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut sink: W) -> io::Result<()> {
        writeln!(sink, "n {}", self.node_count())?;
        for (i, j) in self.edges() {
            writeln!(sink, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn to_edge_list_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("edge list is ASCII")
    }

    /// Parses the format produced by [`Graph::write_edge_list`].
    ///
    /// Accepts pairs in either orientation and in any order, but rejects
    /// self-loops, duplicates and out-of-range endpoints.
    pub fn read_edge_list<R: BufRead>(source: R) -> Result<Self, TopologyError> {
        let mut lines = source.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header line"))?;
        let header = header?;
        let n = header
            .strip_prefix("n ")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| parse_err(1, "expected header `n <count>`"))?;
        let mut g = Self::empty(n);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut endpoint = || -> Result<usize, TopologyError> {
                fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "expected two node ids"))
            };
            let (i, j) = (endpoint()?, endpoint()?);
            if fields.next().is_some() {
                return Err(parse_err(line_no, "trailing fields"));
            }
            match g.add_edge(i, j) {
                Ok(true) => {}
                Ok(false) => return Err(parse_err(line_no, &format!("duplicate edge {i} {j}"))),
                Err(e) => return Err(parse_err(line_no, &e.to_string())),
            }
        }
        Ok(g)
    }

    fn insert(&mut self, i: usize, j: usize) -> bool {
        let fresh = self.adj[i].insert(j);
        if fresh {
            self.adj[j].insert(i);
            self.edge_count += 1;
        }
        fresh
    }

    fn remove(&mut self, i: usize, j: usize) -> bool {
        let present = self.adj[i].remove(&j);
        if present {
            self.adj[j].remove(&i);
            self.edge_count -= 1;
        }
        present
    }

    fn check_node(&self, node: usize) -> Result<(), TopologyError> {
        if node < self.node_count() {
            Ok(())
        } else {
            Err(TopologyError::NodeOutOfRange { node, n: self.node_count() })
        }
    }
}

fn parse_err(line: usize, msg: &str) -> TopologyError {
    TopologyError::Parse { line, msg: msg.to_string() }
}

fn check_lattice(n: usize, k: usize) -> Result<(), TopologyError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(TopologyError::InvalidParams(format!("k must be even and >= 2, got {k}")));
    }
    if k >= n {
        return Err(TopologyError::InvalidParams(format!("k must be < n, got k={k}, n={n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldParams {
    pub n: usize,
    /// Even ring-lattice degree.
    pub k: usize,
    /// Per-edge rewiring probability.
    pub beta: f64,
    pub seed: u64,
}

impl SmallWorldParams {
    pub fn validate(&self) -> Result<(), TopologyError> {
        check_lattice(self.n, self.k)?;
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(TopologyError::InvalidParams(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFreeParams {
    pub n: usize,
    /// Size of the initial complete core.
    pub m0: usize,
    /// Edges added per arriving node.
    pub m: usize,
    pub seed: u64,
}

impl ScaleFreeParams {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.m < 1 || self.m > self.m0 || self.m0 > self.n {
            return Err(TopologyError::InvalidParams(format!(
                "need 1 <= m <= m0 <= n, got m={}, m0={}, n={}",
                self.m, self.m0, self.n
            )));
        }
        Ok(())
    }
}

/// One Watts-Strogatz rewire: lattice edge `{kept, old}` became `{kept, new}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewire {
    pub kept: usize,
    pub old: usize,
    pub new: usize,
}

/// Rewires in the order they were performed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewireLog {
    pub entries: Vec<Rewire>,
}

impl RewireLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `kept old new` line per rewire.
    pub fn write_text<W: Write>(&self, mut sink: W) -> io::Result<()> {
        for r in &self.entries {
            writeln!(sink, "{} {} {}", r.kept, r.old, r.new)?;
        }
        Ok(())
    }
}

/// Watts-Strogatz small-world graph.
///
/// Lattice edges `(i, i + j mod n)` are visited for `j = 1..=k/2`, `i = 0..n`.
/// With probability `beta` the far endpoint is replaced by a uniformly chosen
/// node that is neither `i` nor already adjacent to `i`; when no such node
/// exists the edge is left alone. The edge count stays `n * k / 2`.
pub fn generate_small_world(params: &SmallWorldParams) -> Result<(Graph, RewireLog), TopologyError> {
    params.validate()?;
    let SmallWorldParams { n, k, beta, seed } = *params;
    let mut g = Graph::ring_lattice(n, k)?;
    let mut log = RewireLog::default();
    let mut rng = rng::stream(seed);
    let mut candidates = Vec::with_capacity(n);
    for j in 1..=k / 2 {
        for i in 0..n {
            if rng.random::<f64>() >= beta {
                continue;
            }
            let old = (i + j) % n;
            candidates.clear();
            candidates.extend((0..n).filter(|&c| c != i && !g.has_edge(i, c)));
            if candidates.is_empty() {
                continue;
            }
            let new = candidates[rng.random_range(0..candidates.len())];
            let removed = g.remove(i, old);
            debug_assert!(removed, "lattice edge {i}-{old} visited twice");
            g.insert(i, new);
            log.entries.push(Rewire { kept: i, old, new });
        }
    }
    Ok((g, log))
}

/// Barabási–Albert scale-free graph grown from a complete core on `m0` nodes.
///
/// Each arriving node draws targets with probability proportional to current
/// degree, discarding repeats, until it has `m` distinct targets.
pub fn generate_scale_free(params: &ScaleFreeParams) -> Result<Graph, TopologyError> {
    params.validate()?;
    let ScaleFreeParams { n, m0, m, seed } = *params;
    let mut g = Graph::empty(n);
    // each edge contributes both endpoints, so a uniform draw is degree-proportional
    let mut endpoints = Vec::with_capacity(2 * (m0 * m0 + n * m));
    for i in 0..m0 {
        for j in i + 1..m0 {
            g.insert(i, j);
            endpoints.extend([i, j]);
        }
    }
    let mut rng = rng::stream(seed);
    let mut targets = Vec::with_capacity(m);
    for v in m0..n {
        targets.clear();
        while targets.len() < m {
            let t = if endpoints.is_empty() {
                rng.random_range(0..v)
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            g.insert(v, t);
            endpoints.extend([v, t]);
        }
    }
    Ok(g)
}
