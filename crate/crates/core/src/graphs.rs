//! Directed graphs on `{0, …, n-1}` and the structural predicates the
//! synthesis results depend on.
//!
//! Orientation follows the adjacency-matrix convention used throughout the
//! crate: `mask(i, j) == true` encodes the edge `j → i`, i.e. subsystem `j`
//! may influence subsystem `i`. Indices are 0-based in the Rust API and
//! 1-based in JSON and in error messages.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct DirectedGraph {
    n: usize,
    // row-major, adj[i * n + j] <=> edge j -> i
    adj: Vec<bool>,
}

impl DirectedGraph {
    /// Builds a graph from a square 0/1 mask where `mask[i][j] = 1` encodes
    /// the edge `j → i`.
    pub fn from_adjacency(mask: &[Vec<i64>]) -> Result<Self> {
        let n = mask.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("graph must have at least one vertex".into()));
        }
        let mut adj = Vec::with_capacity(n * n);
        for (i, row) in mask.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare { row: i, len: row.len(), n });
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => adj.push(false),
                    1 => adj.push(true),
                    value => return Err(Error::NonBinaryEntry { row: i, col: j, value }),
                }
            }
        }
        Ok(Self { n, adj })
    }

    /// Builds a graph from `(from, to)` pairs (0-based).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch("graph must have at least one vertex".into()));
        }
        let mut g = Self::empty(n);
        for &(from, to) in edges {
            for v in [from, to] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            g.adj[to * n + from] = true;
        }
        Ok(g)
    }

    /// No edges at all, not even self-loops.
    pub fn empty(n: usize) -> Self {
        Self { n, adj: vec![false; n * n] }
    }

    pub fn self_loops(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            g.adj[i * n + i] = true;
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        Self { n, adj: vec![true; n * n] }
    }

    /// Directed chain `0 → 1 → … → n-1`, optionally with self-loops.
    pub fn chain(n: usize, with_self_loops: bool) -> Self {
        let mut g = if with_self_loops { Self::self_loops(n) } else { Self::empty(n) };
        for k in 1..n {
            g.adj[k * n + (k - 1)] = true;
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adjacency entry `(i, j)`, true iff the edge `j → i` is present.
    pub fn mask(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.mask(to, from)
    }

    pub fn with_edge(mut self, from: usize, to: usize) -> Self {
        self.adj[to * self.n + from] = true;
        self
    }

    pub fn without_edge(mut self, from: usize, to: usize) -> Self {
        self.adj[to * self.n + from] = false;
        self
    }

    /// All edges as `(from, to)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for from in 0..self.n {
            for to in 0..self.n {
                if self.has_edge(from, to) {
                    out.push((from, to));
                }
            }
        }
        out
    }

    /// The adjacency mask as a 0/1 matrix.
    pub fn adjacency(&self) -> DMatrix<u8> {
        DMatrix::from_fn(self.n, self.n, |i, j| u8::from(self.mask(i, j)))
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.mask(i, i))
    }

    fn has_cross_out_edge(&self, v: usize) -> bool {
        (0..self.n).any(|t| t != v && self.has_edge(v, t))
    }

    fn has_cross_in_edge(&self, v: usize) -> bool {
        (0..self.n).any(|s| s != v && self.has_edge(s, v))
    }

    /// Vertices with no outgoing edge to another vertex. Self-loops are
    /// allowed on a sink.
    pub fn sinks(&self) -> BTreeSet<usize> {
        (0..self.n).filter(|&v| !self.has_cross_out_edge(v)).collect()
    }

    pub fn is_sink(&self, v: usize) -> bool {
        !self.has_cross_out_edge(v)
    }

    /// Vertices with no cross edge in either direction.
    pub fn isolated_nodes(&self) -> BTreeSet<usize> {
        (0..self.n)
            .filter(|&v| !self.has_cross_out_edge(v) && !self.has_cross_in_edge(v))
            .collect()
    }

    /// True iff every edge of `small` is also an edge of `self`.
    pub fn is_supergraph(&self, small: &DirectedGraph) -> Result<bool> {
        self.check_same_n(small)?;
        Ok(self.adj.iter().zip(&small.adj).all(|(&big, &s)| big || !s))
    }

    fn check_same_n(&self, other: &DirectedGraph) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "graphs have {} and {} vertices",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Reorders vertices so that sinks come last, keeping the relative order
    /// of non-sinks and of sinks.
    pub fn sink_partition(&self) -> SinkPartition {
        let sinks = self.sinks();
        let mut permutation: Vec<usize> = (0..self.n).filter(|v| !sinks.contains(v)).collect();
        permutation.extend(sinks.iter().copied());
        let permuted = DMatrix::from_fn(self.n, self.n, |i, j| {
            u8::from(self.mask(permutation[i], permutation[j]))
        });
        let c = sinks.len();
        let m = self.n - c;
        SinkPartition {
            s11: permuted.view((0, 0), (m, m)).into_owned(),
            s21: permuted.view((m, 0), (c, m)).into_owned(),
            s22: permuted.view((m, m), (c, c)).into_owned(),
            permutation,
            sink_count: c,
            permuted,
        }
    }

    /// Looks for a path `i → j → ℓ` in the plant graph `self` over distinct
    /// vertices such that the design graph `design` lacks the edge `ℓ → j`.
    /// Returns the lexicographically first such `(i, j, ℓ)`.
    pub fn design_condition_applies(
        &self,
        design: &DirectedGraph,
    ) -> Result<Option<(usize, usize, usize)>> {
        self.check_same_n(design)?;
        if let Some(vertex) = (0..design.n).find(|&v| !design.mask(v, v)) {
            return Err(Error::MissingSelfLoop { vertex });
        }
        let n = self.n;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i && self.has_edge(i, j)) {
                for l in (0..n).filter(|&l| l != i && l != j && self.has_edge(j, l)) {
                    if !design.has_edge(l, j) {
                        return Ok(Some((i, j, l)));
                    }
                }
            }
        }
        Ok(None)
    }
}

/// A plant graph with its sinks renumbered last. After the permutation the
/// adjacency has the block form `[[S11, 0], [S21, S22]]` with `S22` diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkPartition {
    /// `permutation[k]` is the original vertex placed at position `k`.
    pub permutation: Vec<usize>,
    pub sink_count: usize,
    pub permuted: DMatrix<u8>,
    pub s11: DMatrix<u8>,
    pub s21: DMatrix<u8>,
    pub s22: DMatrix<u8>,
}

impl SinkPartition {
    /// The top-right `(n-c) × c` block, all zero by construction.
    pub fn s12(&self) -> DMatrix<u8> {
        let m = self.permutation.len() - self.sink_count;
        self.permuted.view((0, m), (m, self.sink_count)).into_owned()
    }
}

pub fn is_diagonal_mask(m: &DMatrix<u8>) -> bool {
    m.iter().enumerate().all(|(k, &v)| {
        let (i, j) = (k % m.nrows(), k / m.nrows());
        v == 0 || i == j
    })
}

pub fn is_zero_mask(m: &DMatrix<u8>) -> bool {
    m.iter().all(|&v| v == 0)
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphJson> for DirectedGraph {
    type Error = Error;

    fn try_from(j: GraphJson) -> Result<Self> {
        let mut edges = Vec::with_capacity(j.edges.len());
        for [from, to] in j.edges {
            if from == 0 || to == 0 || from > j.n || to > j.n {
                return Err(Error::VertexOutOfRange {
                    vertex: from.max(to).max(1) - 1,
                    n: j.n,
                });
            }
            edges.push((from - 1, to - 1));
        }
        DirectedGraph::from_edges(j.n, &edges)
    }
}

impl From<DirectedGraph> for GraphJson {
    fn from(g: DirectedGraph) -> Self {
        GraphJson {
            n: g.n,
            edges: g.edges().into_iter().map(|(f, t)| [f + 1, t + 1]).collect(),
        }
    }
}
