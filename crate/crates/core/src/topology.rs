//! Communication topologies and gossip mixing matrices.
//!
//! Experiments run over an Erdős–Rényi graph `G(m, p)`; the mixing matrix
//! is built from it with Metropolis–Hastings weights, which makes `W`
//! symmetric, doubly stochastic, and nonnegative by construction. The
//! spectral gap `lambda = ||W - 11^T/m||_2` is measured, not assumed:
//! consensus only contracts when `lambda < 1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::linalg;
use crate::rng::splitmix64;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("graph must be connected")]
    Disconnected,
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("edge ({i}, {j}) is invalid for {m} agents: {reason}")]
    BadEdge { i: usize, j: usize, m: usize, reason: &'static str },
    #[error("edge list line {line}: {reason}")]
    BadEdgeList { line: usize, reason: String },
    #[error("matrix is not a valid mixing matrix: {0}")]
    NotMixing(String),
}

/// Undirected simple graph over `m` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    repaired: bool,
}

impl Graph {
    /// Build a graph from unordered agent pairs. Self-loops and
    /// out-of-range endpoints are rejected; duplicates collapse.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, TopologyError> {
        assert!(m >= 1, "agent count must be positive");
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(TopologyError::BadEdge { i, j, m, reason: "self-loop" });
            }
            if i >= m || j >= m {
                return Err(TopologyError::BadEdge { i, j, m, reason: "endpoint out of range" });
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { m, edges: set, repaired: false })
    }

    /// Ring over `m` agents (a single edge for `m = 2`, empty for `m = 1`).
    pub fn ring(m: usize) -> Self {
        assert!(m >= 1);
        let edges = (0..m)
            .map(|i| (i, (i + 1) % m))
            .filter(|&(i, j)| i != j)
            .collect::<Vec<_>>();
        Self::new(m, edges).expect("ring edges are valid")
    }

    /// Complete graph over `m` agents.
    pub fn complete(m: usize) -> Self {
        assert!(m >= 1);
        let edges = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)));
        Self::new(m, edges).expect("complete-graph edges are valid")
    }

    pub fn num_agents(&self) -> usize {
        self.m
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Whether the connectivity repair fired during generation.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    /// Realized sparsity `p = 2|E| / (m(m-1))`; zero for a single agent.
    pub fn sparsity(&self) -> f64 {
        if self.m < 2 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / (self.m * (self.m - 1)) as f64
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        if self.m <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.m
    }

    /// Edge-list text, one `i j` pair per line, 0-indexed, sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            writeln!(out, "{i} {j}").expect("writing to string cannot fail");
        }
        out
    }

    /// Parse the output of [`Graph::to_edge_list`].
    pub fn from_edge_list(m: usize, text: &str) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize, TopologyError> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| TopologyError::BadEdgeList {
                    line: idx + 1,
                    reason: format!("expected two agent indices, got {line:?}"),
                })
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(TopologyError::BadEdgeList {
                    line: idx + 1,
                    reason: format!("trailing tokens in {line:?}"),
                });
            }
            edges.push((i, j));
        }
        Self::new(m, edges)
    }
}

/// Draw `G(m, p)` with each candidate edge included independently with
/// probability `p`, deterministically in `(m, p, seed)`.
///
/// A disconnected draw is repaired by adding the agent-index ring, so any
/// `(m, p, seed)` triple yields a runnable topology; `was_repaired`
/// records that the effective edge set differs from the raw draw.
pub fn gen_erdos_renyi(m: usize, p: f64, seed: u64) -> Graph {
    assert!(m >= 1, "agent count must be positive");
    assert!((0.0..=1.0).contains(&p), "edge probability must lie in [0, 1]");
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x544f_504f));
    let mut edges = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut graph = Graph::new(m, edges).expect("generated edges are valid");
    if m > 1 && !graph.is_connected() {
        for i in 0..m {
            let (a, b) = (i, (i + 1) % m);
            graph.edges.insert((a.min(b), a.max(b)));
        }
        graph.repaired = true;
    }
    graph
}

/// Symmetric doubly-stochastic gossip weights with measured spectral gap.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: Array2<f64>,
    lambda: f64,
}

impl MixingMatrix {
    /// Validate an explicit weight matrix and measure its spectral gap.
    pub fn from_matrix(w: Array2<f64>) -> Result<Self, TopologyError> {
        let (rows, cols) = w.dim();
        if rows != cols {
            return Err(TopologyError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            for j in 0..cols {
                if w[[i, j]] < 0.0 {
                    return Err(TopologyError::NotMixing(format!(
                        "negative entry {} at ({i}, {j})",
                        w[[i, j]]
                    )));
                }
                if w[[i, j]] != w[[j, i]] {
                    return Err(TopologyError::NotMixing(format!("asymmetric at ({i}, {j})")));
                }
            }
            let row_sum: f64 = w.row(i).sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(TopologyError::NotMixing(format!(
                    "row {i} sums to {row_sum}, expected 1"
                )));
            }
        }
        let lambda = spectral_gap(&w)?;
        Ok(Self { w, lambda })
    }

    /// Uniform averaging `W = 11^T / m` (spectral gap exactly zero).
    pub fn uniform(m: usize) -> Self {
        assert!(m >= 1);
        Self { w: Array2::from_elem((m, m), 1.0 / m as f64), lambda: 0.0 }
    }

    pub fn num_agents(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    /// Measured `||W - 11^T/m||_2`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Assumption that makes gossip contract: `lambda < 1`.
    pub fn has_spectral_gap(&self) -> bool {
        self.lambda < 1.0
    }

    /// Mix a stack of per-agent vectors: row `i` of the result is
    /// `sum_j w_ij * columns[j]`, accumulated in fixed agent order.
    pub fn mix(&self, columns: &[Array1<f64>]) -> Vec<Array1<f64>> {
        let m = self.num_agents();
        assert_eq!(columns.len(), m, "one column per agent");
        (0..m)
            .map(|i| {
                let mut acc = Array1::<f64>::zeros(columns[0].len());
                for (j, col) in columns.iter().enumerate() {
                    let wij = self.w[[i, j]];
                    if wij != 0.0 {
                        acc.scaled_add(wij, col);
                    }
                }
                acc
            })
            .collect()
    }
}

/// Metropolis–Hastings weights for a connected graph:
/// `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal absorbs the
/// remainder. Produces a valid mixing matrix with `lambda < 1`.
pub fn metropolis_weights(graph: &Graph) -> Result<MixingMatrix, TopologyError> {
    if !graph.is_connected() {
        return Err(TopologyError::Disconnected);
    }
    let m = graph.num_agents();
    let deg = graph.degrees();
    let mut w = Array2::<f64>::zeros((m, m));
    for (i, j) in graph.edges() {
        let weight = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[[i, j]] = weight;
        w[[j, i]] = weight;
    }
    for i in 0..m {
        let off: f64 = w.row(i).sum();
        w[[i, i]] = 1.0 - off;
    }
    let lambda = spectral_gap(&w)?;
    Ok(MixingMatrix { w, lambda })
}

/// `||W - 11^T/m||_2` by power iteration on `(W-J)^T (W-J)` to relative
/// tolerance 1e-10 (10 000-iteration cap).
pub fn spectral_gap(w: &Array2<f64>) -> Result<f64, TopologyError> {
    let (rows, cols) = w.dim();
    if rows != cols {
        return Err(TopologyError::NotSquare { rows, cols });
    }
    let deflated = w - Array2::from_elem((rows, rows), 1.0 / rows as f64);
    linalg::spectral_norm(&deflated, 1e-10, 10_000).map_err(|_| TopologyError::NotSquare { rows, cols })
}
