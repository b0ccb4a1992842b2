//! Weighted digraphs, seeded random generators, weak connectivity and
//! maximum bipartite matching (used as the generic rank of a sparsity
//! pattern).
//!
//! Edge `(to, from)` is directed from `from` to `to`, so it populates entry
//! `[to][from]` of the adjacency matrix.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Sorted set of node (or unmeasured-node) indices.
pub type NodeSet = BTreeSet<usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    pub to: usize,
    pub from: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    node_count: usize,
    edges: Vec<Edge>,
}

impl Digraph {
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            for id in [e.to, e.from] {
                if id >= node_count {
                    return Err(Error::NodeOutOfRange { id, node_count });
                }
            }
            if e.to == e.from {
                return Err(Error::InvalidArgument(format!("self-loop at node {}", e.to)));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "edge {} <- {} has non-positive weight {}",
                    e.to, e.from, e.weight
                )));
            }
        }
        Ok(Self { node_count, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `[A]_{to, from} = weight`; parallel edges are summed.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.node_count, self.node_count);
        for e in &self.edges {
            a[(e.to, e.from)] += e.weight;
        }
        a
    }

    /// Degree in the underlying undirected simple graph.
    pub fn undirected_degrees(&self) -> Vec<usize> {
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            pairs.insert((e.to.min(e.from), e.to.max(e.from)));
        }
        let mut deg = vec![0; self.node_count];
        for (a, b) in pairs {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

/// Measured / unmeasured split of the node set. `measured` is `V1` (size m),
/// `unmeasured` is `V2` (size n); the system ordering puts `V1` first.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodePartition {
    measured: Vec<usize>,
    unmeasured: Vec<usize>,
}

impl NodePartition {
    /// Measured nodes as given; the rest become unmeasured in ascending order.
    pub fn new(node_count: usize, measured: Vec<usize>) -> Result<Self> {
        let set: NodeSet = measured.iter().cloned().collect();
        let unmeasured = (0..node_count).filter(|i| !set.contains(i)).collect();
        Self::from_lists(node_count, measured, unmeasured)
    }

    pub fn from_lists(node_count: usize, measured: Vec<usize>, unmeasured: Vec<usize>) -> Result<Self> {
        if measured.is_empty() || unmeasured.is_empty() {
            return Err(Error::Partition("need at least one measured and one unmeasured node".into()));
        }
        let mut seen = vec![false; node_count];
        for &id in measured.iter().chain(unmeasured.iter()) {
            if id >= node_count {
                return Err(Error::NodeOutOfRange { id, node_count });
            }
            if seen[id] {
                return Err(Error::Partition(format!("node {id} listed twice")));
            }
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("node {missing} is in neither set")));
        }
        Ok(Self { measured, unmeasured })
    }

    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub fn unmeasured(&self) -> &[usize] {
        &self.unmeasured
    }

    pub fn m(&self) -> usize {
        self.measured.len()
    }

    pub fn n(&self) -> usize {
        self.unmeasured.len()
    }

    pub fn node_count(&self) -> usize {
        self.m() + self.n()
    }

    /// Original node id for each system row (measured first).
    pub fn ordering(&self) -> Vec<usize> {
        self.measured.iter().chain(self.unmeasured.iter()).cloned().collect()
    }
}

fn check_weights(low: f64, high: f64) -> Result<()> {
    if !(low >= 0.0 && low < high && high.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weight range must satisfy 0 <= low < high, got ({low}, {high})"
        )));
    }
    Ok(())
}

/// Uniform on the open interval `(low, high)`.
fn open_uniform(rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
    loop {
        let w = rng.gen_range(low..high);
        if w > low {
            return w;
        }
    }
}

/// Directed G(N, p): every ordered pair `(i, j)`, `i != j`, gets an edge with
/// probability `p_edge`, weight uniform in `(weight_low, weight_high)`.
pub fn erdos_renyi(total_nodes: usize, p_edge: f64, weight_low: f64, weight_high: f64, seed: u64) -> Result<Digraph> {
    if total_nodes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 nodes, got {total_nodes}")));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::InvalidArgument(format!("edge probability {p_edge} outside [0, 1]")));
    }
    check_weights(weight_low, weight_high)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for to in 0..total_nodes {
        for from in 0..total_nodes {
            if to != from && rng.gen_bool(p_edge) {
                edges.push(Edge { to, from, weight: open_uniform(&mut rng, weight_low, weight_high) });
            }
        }
    }
    Digraph::new(total_nodes, edges)
}

/// Undirected G(N, p) materialized as a symmetric digraph: each unordered pair
/// is linked with probability `p_edge`, both directions sharing one weight.
pub fn erdos_renyi_undirected(
    total_nodes: usize,
    p_edge: f64,
    weight_low: f64,
    weight_high: f64,
    seed: u64,
) -> Result<Digraph> {
    if total_nodes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 nodes, got {total_nodes}")));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::InvalidArgument(format!("edge probability {p_edge} outside [0, 1]")));
    }
    check_weights(weight_low, weight_high)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..total_nodes {
        for b in (a + 1)..total_nodes {
            if rng.gen_bool(p_edge) {
                let w = open_uniform(&mut rng, weight_low, weight_high);
                edges.push(Edge { to: a, from: b, weight: w });
                edges.push(Edge { to: b, from: a, weight: w });
            }
        }
    }
    Digraph::new(total_nodes, edges)
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut r = rng.gen_range(0.0..total);
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if r < w {
                return Some(i);
            }
            r -= w;
            last = Some(i);
        }
    }
    last
}

/// Undirected preferential-attachment graph with exactly `edge_count` edges,
/// returned as a symmetric digraph.
///
/// A spanning tree is grown first (node `t` attaches to an earlier node), then
/// the remaining edges join two non-adjacent nodes. Every endpoint is drawn
/// with probability proportional to `(degree + 1)^bias`.
pub fn scale_free(
    total_nodes: usize,
    bias: f64,
    edge_count: usize,
    weight_low: f64,
    weight_high: f64,
    seed: u64,
) -> Result<Digraph> {
    if total_nodes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 nodes, got {total_nodes}")));
    }
    if !(bias >= 0.0) || !bias.is_finite() {
        return Err(Error::InvalidArgument(format!("bias must be >= 0, got {bias}")));
    }
    let max_edges = total_nodes * (total_nodes - 1) / 2;
    if edge_count < total_nodes - 1 || edge_count > max_edges {
        return Err(Error::InvalidArgument(format!(
            "infeasible edge count {edge_count} for {total_nodes} nodes (allowed {}..={max_edges})",
            total_nodes - 1
        )));
    }
    check_weights(weight_low, weight_high)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![vec![false; total_nodes]; total_nodes];
    let mut deg = vec![0usize; total_nodes];
    let attract = |d: usize| libm::pow(d as f64 + 1.0, bias);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(edge_count);

    for t in 1..total_nodes {
        let weights: Vec<f64> = (0..t).map(|i| attract(deg[i])).collect();
        let target = pick_weighted(&mut rng, &weights).expect("positive attachment weights");
        adj[t][target] = true;
        adj[target][t] = true;
        deg[t] += 1;
        deg[target] += 1;
        pairs.push((target, t));
    }
    while pairs.len() < edge_count {
        let w_first: Vec<f64> = (0..total_nodes)
            .map(|i| if deg[i] < total_nodes - 1 { attract(deg[i]) } else { 0.0 })
            .collect();
        let a = pick_weighted(&mut rng, &w_first).expect("graph is not complete");
        let w_second: Vec<f64> = (0..total_nodes)
            .map(|j| if j != a && !adj[a][j] { attract(deg[j]) } else { 0.0 })
            .collect();
        let b = pick_weighted(&mut rng, &w_second).expect("node has a non-neighbor");
        adj[a][b] = true;
        adj[b][a] = true;
        deg[a] += 1;
        deg[b] += 1;
        pairs.push((a.min(b), a.max(b)));
    }

    let mut edges = Vec::with_capacity(2 * edge_count);
    for (a, b) in pairs {
        let w = open_uniform(&mut rng, weight_low, weight_high);
        edges.push(Edge { to: a, from: b, weight: w });
        edges.push(Edge { to: b, from: a, weight: w });
    }
    Digraph::new(total_nodes, edges)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Whether the subgraph induced by `subset` is connected once edge directions
/// are ignored.
pub fn is_weakly_connected(g: &Digraph, subset: &[usize]) -> Result<bool> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("subset must be nonempty".into()));
    }
    let mut local = vec![usize::MAX; g.node_count()];
    let mut count = 0;
    for &id in subset {
        if id >= g.node_count() {
            return Err(Error::NodeOutOfRange { id, node_count: g.node_count() });
        }
        if local[id] == usize::MAX {
            local[id] = count;
            count += 1;
        }
    }
    let mut uf = UnionFind::new(count);
    for e in g.edges() {
        let (a, b) = (local[e.to], local[e.from]);
        if a != usize::MAX && b != usize::MAX {
            uf.union(a, b);
        }
    }
    let root = uf.find(0);
    Ok((1..count).all(|i| uf.find(i) == root))
}

/// Weak connectivity of the graph whose edges are the nonzero off-diagonal
/// entries of a square matrix.
pub fn pattern_is_weakly_connected(a: &Matrix) -> bool {
    let n = a.nrows();
    if n == 0 {
        return false;
    }
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                uf.union(i, j);
            }
        }
    }
    let root = uf.find(0);
    (1..n).all(|i| uf.find(i) == root)
}

/// Unmeasured nodes with at least one measured out-neighbor: the indices of
/// the nonzero columns of `A12`.
pub fn neighbor_set_of_measured(a12: &Matrix) -> NodeSet {
    (0..a12.ncols())
        .filter(|&j| a12.column(j).iter().any(|&v| v != 0.0))
        .collect()
}

pub fn sparsity_pattern(m: &Matrix) -> DMatrix<bool> {
    m.map(|v| v != 0.0)
}

/// Size of a maximum matching between rows and columns of a boolean pattern
/// (Hopcroft-Karp).
pub fn max_bipartite_matching(pattern: &DMatrix<bool>) -> usize {
    let rows = pattern.nrows();
    let cols = pattern.ncols();
    let adj: Vec<Vec<usize>> = (0..rows)
        .map(|r| (0..cols).filter(|&c| pattern[(r, c)]).collect())
        .collect();
    HopcroftKarp::new(&adj, cols).run()
}

/// Generic rank of the nonzero pattern of `m`.
pub fn generic_rank(m: &Matrix) -> usize {
    max_bipartite_matching(&sparsity_pattern(m))
}

struct HopcroftKarp<'a> {
    adj: &'a [Vec<usize>],
    match_row: Vec<Option<usize>>,
    match_col: Vec<Option<usize>>,
    dist: Vec<usize>,
}

impl<'a> HopcroftKarp<'a> {
    fn new(adj: &'a [Vec<usize>], cols: usize) -> Self {
        Self {
            adj,
            match_row: vec![None; adj.len()],
            match_col: vec![None; cols],
            dist: vec![usize::MAX; adj.len()],
        }
    }

    fn run(mut self) -> usize {
        let mut size = 0;
        while self.bfs() {
            for r in 0..self.adj.len() {
                if self.match_row[r].is_none() && self.dfs(r) {
                    size += 1;
                }
            }
        }
        size
    }

    // layers free rows; true if some augmenting path exists
    fn bfs(&mut self) -> bool {
        let mut queue = VecDeque::new();
        for r in 0..self.adj.len() {
            if self.match_row[r].is_none() {
                self.dist[r] = 0;
                queue.push_back(r);
            } else {
                self.dist[r] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(r) = queue.pop_front() {
            for &c in &self.adj[r] {
                match self.match_col[c] {
                    None => found = true,
                    Some(r2) if self.dist[r2] == usize::MAX => {
                        self.dist[r2] = self.dist[r] + 1;
                        queue.push_back(r2);
                    }
                    _ => {}
                }
            }
        }
        found
    }

    fn dfs(&mut self, r: usize) -> bool {
        for i in 0..self.adj[r].len() {
            let c = self.adj[r][i];
            let ok = match self.match_col[c] {
                None => true,
                Some(r2) => self.dist[r2] == self.dist[r] + 1 && self.dfs(r2),
            };
            if ok {
                self.match_row[r] = Some(c);
                self.match_col[c] = Some(r);
                return true;
            }
        }
        self.dist[r] = usize::MAX;
        false
    }
}
