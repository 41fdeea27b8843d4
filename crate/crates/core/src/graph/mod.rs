//! Weighted directed graphs.
//!
//! Adjacency follows the contact convention `a_ij > 0` when node `i` can be
//! directly affected (infected) by node `j`. An [`Edge`] `{source: i, target: j}`
//! therefore sets `a_ij`. The same weighted matrix doubles as an infection-rate
//! matrix `B = [β_ij]`.

mod io;
mod removal;
mod spectral;

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_edge_list, save_edge_list};
pub use removal::{
    remove_links_exhaustive, remove_links_greedy, remove_nodes_exact, remove_nodes_greedy,
    LinkRemoval, NodeRemoval, NodeScore, RemovalError, MAX_EXACT_NODES,
};
pub use spectral::{lambda_max, lambda_max_with, SpectralError, SpectralOptions, SpectralResult};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({from}, {to}) references a node >= n = {n}")]
    NodeOutOfRange { from: usize, to: usize, n: usize },
    #[error("edge ({from}, {to}) has invalid weight {weight}; weights must be finite and > 0")]
    BadWeight { from: usize, to: usize, weight: f64 },
    #[error("duplicate edge ({from}, {to})")]
    DuplicateEdge { from: usize, to: usize },
    #[error("graph flagged undirected but edge ({from}, {to}) has no equal-weight reverse")]
    Asymmetric { from: usize, to: usize },
    #[error("grid {rows}x{cols} does not have {n} nodes")]
    GridMismatch { rows: usize, cols: usize, n: usize },
    #[error("graph needs at least one node")]
    Empty,
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(source: usize, target: usize, weight: f64) -> Self {
        Self {
            source,
            target,
            weight,
        }
    }
}

/// Generator families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    /// Hub 0 linked both ways to every other node.
    Star,
    Path,
    /// 4-neighbour lattice, row-major node numbering.
    Grid {
        rows: usize,
        cols: usize,
    },
    /// Undirected G(n, p): each unordered pair independently with probability p.
    ErdosRenyi {
        p: f64,
        seed: u64,
    },
    /// Directed G(n, p): each ordered pair independently with probability p.
    DirectedErdosRenyi {
        p: f64,
        seed: u64,
    },
}

/// Directed graph with positive edge weights and no self-loops.
///
/// Edge order is kept as inserted so that serialisation round-trips exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    directed: bool,
}

#[derive(Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<Edge>,
    directed: bool,
}

impl TryFrom<RawGraph> for Graph {
    type Error = GraphError;
    fn try_from(r: RawGraph) -> Result<Self, GraphError> {
        Graph::new(r.n, r.edges, r.directed)
    }
}

impl Graph {
    pub fn new(n: usize, edges: Vec<Edge>, directed: bool) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.source >= n || e.target >= n {
                return Err(GraphError::NodeOutOfRange {
                    from: e.source,
                    to: e.target,
                    n,
                });
            }
            if e.source == e.target {
                return Err(GraphError::SelfLoop(e.source));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GraphError::BadWeight {
                    from: e.source,
                    to: e.target,
                    weight: e.weight,
                });
            }
            if !seen.insert((e.source, e.target)) {
                return Err(GraphError::DuplicateEdge {
                    from: e.source,
                    to: e.target,
                });
            }
        }
        let g = Self { n, edges, directed };
        if !directed {
            let a = g.adjacency();
            for e in &g.edges {
                if a[(e.target, e.source)] != e.weight {
                    return Err(GraphError::Asymmetric {
                        from: e.source,
                        to: e.target,
                    });
                }
            }
        }
        Ok(g)
    }

    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        Self::new(n, Vec::new(), false)
    }

    /// Builds an undirected graph from unordered pairs, adding both directions.
    pub fn undirected(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut edges = Vec::with_capacity(2 * pairs.len());
        for &(i, j, w) in pairs {
            edges.push(Edge::new(i, j, w));
            edges.push(Edge::new(j, i, w));
        }
        Self::new(n, edges, false)
    }

    /// Nonzero off-diagonal entries of a square matrix as a directed graph.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, GraphError> {
        let n = m.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] != 0.0 {
                    edges.push(Edge::new(i, j, m[(i, j)]));
                }
            }
        }
        Self::new(n, edges, true)
    }

    pub fn generate(kind: &GraphKind, n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        match *kind {
            GraphKind::Complete => {
                let mut edges = Vec::with_capacity(n * (n - 1));
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            edges.push(Edge::new(i, j, 1.0));
                        }
                    }
                }
                Self::new(n, edges, false)
            }
            GraphKind::Star => {
                let pairs: Vec<_> = (1..n).map(|j| (0, j, 1.0)).collect();
                Self::undirected(n, &pairs)
            }
            GraphKind::Path => {
                let pairs: Vec<_> = (1..n).map(|j| (j - 1, j, 1.0)).collect();
                Self::undirected(n, &pairs)
            }
            GraphKind::Grid { rows, cols } => {
                if rows * cols != n || rows == 0 || cols == 0 {
                    return Err(GraphError::GridMismatch { rows, cols, n });
                }
                let mut pairs = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        let v = r * cols + c;
                        if c + 1 < cols {
                            pairs.push((v, v + 1, 1.0));
                        }
                        if r + 1 < rows {
                            pairs.push((v, v + cols, 1.0));
                        }
                    }
                }
                Self::undirected(n, &pairs)
            }
            GraphKind::ErdosRenyi { p, seed } => {
                check_probability(p)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pairs = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if unit(&mut rng) < p {
                            pairs.push((i, j, 1.0));
                        }
                    }
                }
                Self::undirected(n, &pairs)
            }
            GraphKind::DirectedErdosRenyi { p, seed } => {
                check_probability(p)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in 0..n {
                        if i != j && unit(&mut rng) < p {
                            edges.push(Edge::new(i, j, 1.0));
                        }
                    }
                }
                Self::new(n, edges, true)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Weighted adjacency matrix `A`, `A[(source, target)] = weight`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.source, e.target)] = e.weight;
        }
        a
    }

    /// Nodes that can affect `i`: `{ j : a_ij > 0 }`, with weights.
    pub fn in_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.source == i)
            .map(|e| (e.target, e.weight))
            .collect();
        v.sort_by_key(|&(j, _)| j);
        v
    }

    /// Nodes that `j` can affect: `{ i : a_ij > 0 }`, with weights.
    pub fn out_neighbors(&self, j: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.target == j)
            .map(|e| (e.source, e.weight))
            .collect();
        v.sort_by_key(|&(i, _)| i);
        v
    }

    /// Number of distinct nodes adjacent to `i` in either direction.
    pub fn degree(&self, i: usize) -> usize {
        let mut nb = BTreeSet::new();
        for e in &self.edges {
            if e.source == i {
                nb.insert(e.target);
            } else if e.target == i {
                nb.insert(e.source);
            }
        }
        nb.len()
    }

    /// Every node reaches every other along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        let forward = self.reach_from(0, |e| (e.source, e.target));
        let backward = self.reach_from(0, |e| (e.target, e.source));
        forward.iter().all(|&x| x) && backward.iter().all(|&x| x)
    }

    fn reach_from(&self, start: usize, arc: impl Fn(&Edge) -> (usize, usize)) -> Vec<bool> {
        let mut succ = vec![Vec::new(); self.n];
        for e in &self.edges {
            let (u, v) = arc(e);
            succ[u].push(v);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Same node set with every edge touching `removed` deleted.
    ///
    /// Node indices are preserved; removed nodes become isolated, which leaves
    /// the spectrum of the induced subgraph unchanged apart from extra zeros.
    pub fn without_nodes(&self, removed: &[usize]) -> Graph {
        let drop: BTreeSet<usize> = removed.iter().copied().collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| !drop.contains(&e.source) && !drop.contains(&e.target))
            .copied()
            .collect();
        Graph {
            n: self.n,
            edges,
            directed: self.directed,
        }
    }

    /// Deletes the listed directed edges `(source, target)`.
    ///
    /// The result is always flagged directed since symmetry may be broken.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Graph {
        let drop: BTreeSet<(usize, usize)> = removed.iter().copied().collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| !drop.contains(&(e.source, e.target)))
            .copied()
            .collect();
        Graph {
            n: self.n,
            edges,
            directed: self.directed || !removed.is_empty(),
        }
    }
}

fn check_probability(p: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GraphError::BadProbability(p))
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}
