//! Network estimation from data plus partial knowledge of the edge set.
//!
//! Two steps: a weighted-lasso neighborhood selection picks the edges left
//! open by the constraints, then the precision matrix is fit by maximum
//! likelihood with that support.

mod cv;
mod lasso;
mod mle;
mod standardize;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Serialize;

pub use cv::{cv_score, cv_scores, default_grid, fold_assignment, select_lambda, select_lambda_with, LambdaSelection};
pub use lasso::{
    fit_all_nodes, lasso_kkt_residual, solve_weighted_lasso, weighted_lasso, weighted_lasso_with, LassoSettings,
    LassoSolution, NeighborhoodFit, PenaltyWeight,
};
pub use mle::{constrained_mle, constrained_mle_with, gaussian_objective, MleDiagnostics, MleSettings, PrecisionEstimate};
pub use standardize::{standardize, StandardizedData};

use crate::error::{Error, Result};
use crate::graph::{EdgeConstraints, NodePair};

/// Union of the selected neighborhoods, with the known edges added and the
/// known non-edges removed.
pub fn assemble_edges(fits: &[NeighborhoodFit], c: &EdgeConstraints) -> Result<BTreeSet<NodePair>> {
    let p = c.dim();
    let mut seen = vec![false; p];
    let mut edges = BTreeSet::new();
    for fit in fits {
        let i = fit.node();
        if i >= p || fit.coefficients().len() + 1 != p {
            return Err(Error::DimensionMismatch(format!("fit for node {i} does not match {p} nodes")));
        }
        seen[i] = true;
        for j in (0..p).filter(|&j| j != i) {
            if fit.coefficient(j).is_some_and(|v| v != 0.0) {
                edges.insert(NodePair::new(i, j).unwrap());
            }
        }
    }
    if let Some(node) = seen.iter().position(|&s| !s) {
        return Err(Error::MissingFit { node });
    }
    edges.extend(c.known_edges().iter().copied());
    for pair in c.known_non_edges() {
        edges.remove(pair);
    }
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LambdaGrid {
    /// Log-spaced from `λmax` down to `min_ratio·λmax`.
    Auto { count: usize, min_ratio: f64 },
    Explicit(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto { count: 20, min_ratio: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub grid: LambdaGrid,
    pub folds: usize,
    pub seed: u64,
    pub lasso: LassoSettings,
    pub mle: MleSettings,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            grid: LambdaGrid::default(),
            folds: 10,
            seed: 0,
            lasso: LassoSettings::default(),
            mle: MleSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkEstimate {
    pub precision: PrecisionEstimate,
    /// `None` when the constraints fix every pair and no selection ran.
    pub lambda: Option<f64>,
    pub cv_scores: Vec<(f64, f64)>,
    pub fits: Vec<NeighborhoodFit>,
    pub info_ratio: f64,
}

impl NetworkEstimate {
    pub fn edges(&self) -> &BTreeSet<NodePair> {
        &self.precision.support
    }
}

/// Full two-step estimate from raw data (samples in rows).
pub fn estimate_network(raw: &DMatrix<f64>, c: &EdgeConstraints, opts: &EstimateOptions) -> Result<NetworkEstimate> {
    let z = standardize(raw)?;
    estimate_network_standardized(&z, c, opts)
}

pub fn estimate_network_standardized(
    z: &StandardizedData,
    c: &EdgeConstraints,
    opts: &EstimateOptions,
) -> Result<NetworkEstimate> {
    lasso::check_dims(z, c)?;
    let sigma_hat = z.gram();
    if c.is_complete() {
        let precision = constrained_mle_with(&sigma_hat, c.known_edges(), &opts.mle)?;
        return Ok(NetworkEstimate {
            precision,
            lambda: None,
            cv_scores: Vec::new(),
            fits: Vec::new(),
            info_ratio: c.info_ratio(),
        });
    }
    let grid = match &opts.grid {
        LambdaGrid::Auto { count, min_ratio } => default_grid(z, *count, *min_ratio)?,
        LambdaGrid::Explicit(g) => g.clone(),
    };
    let selection = select_lambda_with(z, c, &grid, opts.folds, opts.seed, &opts.lasso)?;
    let fits = fit_all_nodes(z, c, selection.lambda, &opts.lasso)?;
    let support = assemble_edges(&fits, c)?;
    let precision = constrained_mle_with(&sigma_hat, &support, &opts.mle)?;
    Ok(NetworkEstimate {
        precision,
        lambda: Some(selection.lambda),
        cv_scores: selection.scores,
        fits,
        info_ratio: c.info_ratio(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3(edges: &[(usize, usize)], non: &[(usize, usize)]) -> EdgeConstraints {
        EdgeConstraints::new(
            3,
            edges.iter().map(|&(a, b)| NodePair::new(a, b).unwrap()),
            non.iter().map(|&(a, b)| NodePair::new(a, b).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn or_rule_and_overrides() {
        // node 0 picks 1, node 2 picks 0; constraints force {1,2} in and {0,2} out
        let fits = vec![
            NeighborhoodFit::new(0, vec![0.4, 0.0], 0.1),
            NeighborhoodFit::new(1, vec![0.0, 0.0], 0.1),
            NeighborhoodFit::new(2, vec![-0.2, 0.0], 0.1),
        ];
        let edges = assemble_edges(&fits, &p3(&[(1, 2)], &[(0, 2)])).unwrap();
        let expected: BTreeSet<_> = [NodePair::new(0, 1).unwrap(), NodePair::new(1, 2).unwrap()].into();
        assert_eq!(edges, expected);
    }

    #[test]
    fn missing_node_is_reported() {
        let fits = vec![NeighborhoodFit::new(0, vec![0.0, 0.0], 0.1), NeighborhoodFit::new(2, vec![0.0, 0.0], 0.1)];
        assert_eq!(assemble_edges(&fits, &EdgeConstraints::empty(3)), Err(Error::MissingFit { node: 1 }));
    }
}
