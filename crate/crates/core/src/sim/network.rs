use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EdgeSign, ExperimentConfig, StructureChange};
use crate::error::Result;
use crate::graph::{influence_from_adjacency, AdjacencyMatrix, InfluenceMatrix, NodePair};
use crate::linalg::SymMatrix;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Null,
    Alternative,
}

/// A ground-truth network: precision matrix `A₀` and its edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueNetwork {
    pub precision: SymMatrix,
    pub edges: BTreeSet<NodePair>,
}

impl TrueNetwork {
    /// Partial-correlation adjacency of `A₀`.
    pub fn adjacency(&self) -> AdjacencyMatrix {
        AdjacencyMatrix::from_precision(&self.precision)
    }

    pub fn influence(&self, zeta: f64) -> Result<InfluenceMatrix> {
        influence_from_adjacency(&self.adjacency(), zeta)
    }
}

/// Draws with probability proportional to `weight`.
fn weighted_pick(rng: &mut ChaCha8Rng, candidates: &[usize], weight: impl Fn(usize) -> f64) -> usize {
    let total: f64 = candidates.iter().map(|&c| weight(c)).sum();
    let mut u = rng.random::<f64>() * total;
    for &c in candidates {
        u -= weight(c);
        if u < 0.0 {
            return c;
        }
    }
    *candidates.last().unwrap()
}

/// Preferential-attachment graph on `n` nodes with `target` edges.
///
/// Nodes join one at a time, linking to an earlier node with probability
/// proportional to degree + 1. Edges beyond the resulting tree are added
/// between a degree-weighted node and a degree-weighted non-neighbor.
pub fn scale_free_edges(n: usize, target: usize, rng: &mut ChaCha8Rng) -> BTreeSet<NodePair> {
    let mut edges = BTreeSet::new();
    let mut degree = vec![0usize; n];
    let weight = |deg: &[usize], c: usize| deg[c] as f64 + 1.0;
    for v in 1..n {
        let earlier: Vec<usize> = (0..v).collect();
        let u = weighted_pick(rng, &earlier, |c| weight(&degree, c));
        edges.insert(NodePair::new(u, v).unwrap());
        degree[u] += 1;
        degree[v] += 1;
    }
    let target = target.min(n * n.saturating_sub(1) / 2);
    let all: Vec<usize> = (0..n).collect();
    while edges.len() < target {
        let open: Vec<usize> = all.iter().copied().filter(|&c| degree[c] + 1 < n).collect();
        let u = weighted_pick(rng, &open, |c| weight(&degree, c));
        let partners: Vec<usize> =
            all.iter().copied().filter(|&c| c != u && !edges.contains(&NodePair::new(u, c).unwrap())).collect();
        let v = weighted_pick(rng, &partners, |c| weight(&degree, c));
        edges.insert(NodePair::new(u, v).unwrap());
        degree[u] += 1;
        degree[v] += 1;
    }
    edges
}

/// Null-condition topology: one scale-free template copied into every
/// subnetwork, plus for each ordered pair of subnetworks an edge between
/// random members with the configured probability.
pub fn null_topology(cfg: &ExperimentConfig, seed: u64) -> BTreeSet<NodePair> {
    let size = cfg.subnetwork_size;
    let mut rng = stream(seed, &[tag::TOPOLOGY]);
    let template = scale_free_edges(size, cfg.edges_per_subnetwork, &mut rng);
    let mut edges = BTreeSet::new();
    for s in 0..cfg.subnetworks {
        let off = s * size;
        edges.extend(template.iter().map(|e| NodePair::new(e.first() + off, e.second() + off).unwrap()));
    }
    for a in 0..cfg.subnetworks {
        for b in (0..cfg.subnetworks).filter(|&b| b != a) {
            if rng.random::<f64>() < cfg.connection_probability {
                let i = a * size + rng.random_range(0..size);
                let j = b * size + rng.random_range(0..size);
                edges.insert(NodePair::new(i, j).unwrap());
            }
        }
    }
    edges
}

/// Applies the structure change to the designated subnetworks.
pub fn alternative_topology(cfg: &ExperimentConfig, null: &BTreeSet<NodePair>, seed: u64) -> BTreeSet<NodePair> {
    let mut edges = null.clone();
    for &s in &cfg.structure_changed {
        let mut rng = stream(seed, &[tag::REWIRE, s as u64]);
        let members = cfg.members(s);
        let inside = |e: &NodePair| members.contains(&e.first()) && members.contains(&e.second());
        let within: Vec<NodePair> = null.iter().copied().filter(inside).collect();
        let k = (cfg.structure_change_fraction * within.len() as f64).round() as usize;
        for i in index::sample(&mut rng, within.len(), k).into_vec() {
            edges.remove(&within[i]);
        }
        if cfg.structure_change == StructureChange::Rewire {
            let vacant: Vec<NodePair> = members
                .clone()
                .flat_map(|i| (i + 1..members.end).map(move |j| NodePair::new(i, j).unwrap()))
                .filter(|e| !null.contains(e))
                .collect();
            let k = k.min(vacant.len());
            for i in index::sample(&mut rng, vacant.len(), k).into_vec() {
                edges.insert(vacant[i]);
            }
        }
    }
    edges
}

/// Edge weight for a pair, drawn from its own stream so the null and
/// alternative networks agree on shared edges.
fn edge_weight(seed: u64, e: NodePair, range: (f64, f64), sign: EdgeSign) -> f64 {
    let mut rng = stream(seed, &[tag::WEIGHTS, e.first() as u64, e.second() as u64]);
    let magnitude = range.0 + (range.1 - range.0) * rng.random::<f64>();
    let coin = rng.random::<bool>();
    match sign {
        EdgeSign::Positive => -magnitude,
        EdgeSign::Mixed if coin => magnitude,
        EdgeSign::Mixed => -magnitude,
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Builds `A₀` on the given support.
///
/// Off-diagonal weights are `±U[lo, hi]` on a unit diagonal, shifted by
/// `δI` so the smallest eigenvalue is at least `min_eigenvalue`. `A₀` is the
/// inverse of the correlation matrix of that matrix's inverse.
pub fn precision_on(cfg: &ExperimentConfig, edges: &BTreeSet<NodePair>, seed: u64) -> Result<SymMatrix> {
    let p = cfg.p;
    let mut a = DMatrix::identity(p, p);
    for &e in edges {
        let w = edge_weight(seed, e, cfg.weight_range, cfg.edge_sign);
        a[(e.first(), e.second())] = w;
        a[(e.second(), e.first())] = w;
    }
    let delta = (cfg.min_eigenvalue - min_eigenvalue(&a)).max(0.0);
    for i in 0..p {
        a[(i, i)] += delta;
    }
    let cov = crate::linalg::cholesky(&SymMatrix::new(a.clone())?)?.inverse();
    let scale: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let a0 = DMatrix::from_fn(p, p, |i, j| a[(i, j)] * scale[i] * scale[j]);
    SymMatrix::new(a0)
}

/// Ground-truth network for one condition.
pub fn generate_network(cfg: &ExperimentConfig, condition: Condition, seed: u64) -> Result<TrueNetwork> {
    cfg.validate()?;
    let null = null_topology(cfg, seed);
    let edges = match condition {
        Condition::Null => null,
        Condition::Alternative => alternative_topology(cfg, &null, seed),
    };
    let precision = precision_on(cfg, &edges, seed)?;
    Ok(TrueNetwork { precision, edges })
}
