//! Weighted networks, prior edge knowledge and influence matrices.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, SymMatrix};

/// Default row-normalization offset for [`normalize_adjacency`].
pub const DEFAULT_ZETA: f64 = 0.01;

/// Unordered node pair, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodePair {
    a: usize,
    b: usize,
}

impl NodePair {
    /// Returns `None` for self pairs.
    pub fn new(i: usize, j: usize) -> Option<Self> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Some(NodePair { a: i, b: j }),
            std::cmp::Ordering::Greater => Some(NodePair { a: j, b: i }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn first(&self) -> usize {
        self.a
    }

    pub fn second(&self) -> usize {
        self.b
    }

    pub fn contains(&self, i: usize) -> bool {
        self.a == i || self.b == i
    }

    /// The endpoint that is not `i`.
    pub fn other(&self, i: usize) -> Option<usize> {
        if self.a == i {
            Some(self.b)
        } else if self.b == i {
            Some(self.a)
        } else {
            None
        }
    }
}

/// Number of unordered node pairs, `p(p−1)/2`.
pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Iterates all unordered pairs in lexicographic order.
pub fn all_pairs(p: usize) -> impl Iterator<Item = NodePair> {
    (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| NodePair { a: i, b: j }))
}

/// A square weighted adjacency matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    weights: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "adjacency must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if let Some(node) = (0..weights.nrows()).find(|&i| weights[(i, i)] != 0.0) {
            return Err(Error::NonZeroDiagonal { node });
        }
        Ok(AdjacencyMatrix { weights })
    }

    pub fn zeros(p: usize) -> Self {
        AdjacencyMatrix { weights: DMatrix::zeros(p, p) }
    }

    /// Builds a symmetric adjacency from weighted pairs.
    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (NodePair, f64)>) -> Result<Self> {
        let mut weights = DMatrix::zeros(p, p);
        for (e, w) in edges {
            if e.second() >= p {
                return Err(Error::IndexOutOfRange { index: e.second(), dim: p });
            }
            weights[(e.first(), e.second())] = w;
            weights[(e.second(), e.first())] = w;
        }
        Ok(AdjacencyMatrix { weights })
    }

    /// Partial-correlation network of a precision matrix:
    /// `ρᵢⱼ = −Aᵢⱼ / √(Aᵢᵢ Aⱼⱼ)`, zero diagonal.
    pub fn from_precision(precision: &SymMatrix) -> Self {
        let a = precision.as_matrix();
        let p = a.nrows();
        let d: Vec<f64> = (0..p).map(|i| a[(i, i)].sqrt()).collect();
        let weights = DMatrix::from_fn(p, p, |i, j| {
            if i == j || a[(i, j)] == 0.0 {
                0.0
            } else {
                -a[(i, j)] / (d[i] * d[j])
            }
        });
        AdjacencyMatrix { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    /// Pairs with a nonzero weight in either direction.
    pub fn edges(&self) -> BTreeSet<NodePair> {
        let p = self.dim();
        all_pairs(p)
            .filter(|e| {
                self.weights[(e.first(), e.second())] != 0.0
                    || self.weights[(e.second(), e.first())] != 0.0
            })
            .collect()
    }
}

/// Row-normalizes an adjacency matrix: `Aᵢⱼ / (Σⱼ |Aᵢⱼ| + ζ)`.
///
/// Rows without any nonzero weight stay zero, including when `ζ = 0`.
pub fn normalize_adjacency(a: &AdjacencyMatrix, zeta: f64) -> Result<AdjacencyMatrix> {
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Error::InvalidArgument(format!("zeta must be a finite nonnegative value, got {zeta}")));
    }
    let w = a.weights();
    let p = a.dim();
    if let Some(node) = (0..p).find(|&i| w[(i, i)] != 0.0) {
        return Err(Error::NonZeroDiagonal { node });
    }
    let mut out = DMatrix::zeros(p, p);
    for i in 0..p {
        let row_sum: f64 = (0..p).map(|j| w[(i, j)].abs()).sum();
        if row_sum == 0.0 {
            continue;
        }
        let denom = row_sum + zeta;
        for j in 0..p {
            out[(i, j)] = w[(i, j)] / denom;
        }
    }
    Ok(AdjacencyMatrix { weights: out })
}

/// Propagated-effect matrix `Λ = (I − 𝒜)⁺` of a normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    entries: DMatrix<f64>,
}

impl InfluenceMatrix {
    pub fn identity(p: usize) -> Self {
        InfluenceMatrix { entries: DMatrix::identity(p, p) }
    }

    /// Wraps an arbitrary square matrix (for designs built from a known `Λ`).
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch("influence matrix must be square".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("influence matrix has non-finite entries".into()));
        }
        Ok(InfluenceMatrix { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

pub fn influence_matrix(a_normalized: &AdjacencyMatrix) -> InfluenceMatrix {
    let p = a_normalized.dim();
    if a_normalized.weights().iter().all(|&v| v == 0.0) {
        return InfluenceMatrix::identity(p);
    }
    let i_minus_a = DMatrix::<f64>::identity(p, p) - a_normalized.weights();
    InfluenceMatrix { entries: pseudo_inverse(&i_minus_a) }
}

/// Normalizes with offset `ζ` and returns the influence matrix.
pub fn influence_from_adjacency(a: &AdjacencyMatrix, zeta: f64) -> Result<InfluenceMatrix> {
    Ok(influence_matrix(&normalize_adjacency(a, zeta)?))
}

/// Known edges (`E1`) and known non-edges (`E0`) over `p` nodes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeConstraints {
    dim: usize,
    known_edges: BTreeSet<NodePair>,
    known_non_edges: BTreeSet<NodePair>,
}

impl EdgeConstraints {
    pub fn new(
        dim: usize,
        known_edges: impl IntoIterator<Item = NodePair>,
        known_non_edges: impl IntoIterator<Item = NodePair>,
    ) -> Result<Self> {
        let known_edges: BTreeSet<_> = known_edges.into_iter().collect();
        let known_non_edges: BTreeSet<_> = known_non_edges.into_iter().collect();
        for e in known_edges.iter().chain(known_non_edges.iter()) {
            if e.second() >= dim {
                return Err(Error::IndexOutOfRange { index: e.second(), dim });
            }
        }
        if let Some(e) = known_edges.intersection(&known_non_edges).next() {
            return Err(Error::InvalidConstraints(format!(
                "pair ({}, {}) is both a known edge and a known non-edge",
                e.first(),
                e.second()
            )));
        }
        Ok(EdgeConstraints { dim, known_edges, known_non_edges })
    }

    pub fn empty(dim: usize) -> Self {
        EdgeConstraints { dim, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_edges(&self) -> &BTreeSet<NodePair> {
        &self.known_edges
    }

    pub fn known_non_edges(&self) -> &BTreeSet<NodePair> {
        &self.known_non_edges
    }

    /// Fraction of all node pairs with known status.
    pub fn info_ratio(&self) -> f64 {
        let total = pair_count(self.dim);
        if total == 0 {
            return 0.0;
        }
        (self.known_edges.len() + self.known_non_edges.len()) as f64 / total as f64
    }

    /// True when every pair has a known status.
    pub fn is_complete(&self) -> bool {
        self.known_edges.len() + self.known_non_edges.len() == pair_count(self.dim)
    }

    /// `Some(true)` for a known edge, `Some(false)` for a known non-edge.
    pub fn status(&self, pair: NodePair) -> Option<bool> {
        if self.known_edges.contains(&pair) {
            Some(true)
        } else if self.known_non_edges.contains(&pair) {
            Some(false)
        } else {
            None
        }
    }

    /// `(J1ⁱ, J0ⁱ)`: nodes known to be, or known not to be, adjacent to `i`.
    pub fn per_node(&self, i: usize) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
        if i >= self.dim {
            return Err(Error::IndexOutOfRange { index: i, dim: self.dim });
        }
        let pick = |set: &BTreeSet<NodePair>| set.iter().filter_map(|e| e.other(i)).collect();
        Ok((pick(&self.known_edges), pick(&self.known_non_edges)))
    }

    /// Dense `p × p` status table: 1 known edge, -1 known non-edge, 0 unknown.
    pub(crate) fn status_table(&self) -> Vec<i8> {
        let p = self.dim;
        let mut t = vec![0i8; p * p];
        for e in &self.known_edges {
            t[e.first() * p + e.second()] = 1;
            t[e.second() * p + e.first()] = 1;
        }
        for e in &self.known_non_edges {
            t[e.first() * p + e.second()] = -1;
            t[e.second() * p + e.first()] = -1;
        }
        t
    }
}

pub fn per_node_constraints(c: &EdgeConstraints, i: usize) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
    c.per_node(i)
}
