//! Weighted lasso by cyclic coordinate descent on the Gram matrix.
//!
//! The objective is `(1/m)‖y − Xθ‖² + 2λ Σₖ tₖ|θₖ|` with per-coordinate
//! weights `tₖ ∈ {0, 1, ∞}`. Weight-∞ coordinates are dropped from the
//! design, weight-0 coordinates enter unpenalized.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::EdgeConstraints;
use crate::linalg::cholesky_dense;

use super::standardize::StandardizedData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyWeight {
    /// `t = 0`: known neighbor.
    Unpenalized,
    /// `t = 1`.
    Penalized,
    /// `t = ∞`: known non-neighbor (or the response itself); held at zero.
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    /// Stop when no coefficient moves by more than this in a full sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings { tolerance: 1e-8, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Solves the weighted lasso given `gram = XᵀX` and `cross = Xᵀy`.
///
/// `m` is the sample count in the `1/m` loss scaling. A warm start, when
/// given, must have the same length as `cross`.
pub fn solve_weighted_lasso(
    gram: &DMatrix<f64>,
    cross: &[f64],
    m: f64,
    weights: &[PenaltyWeight],
    lambda: f64,
    warm_start: Option<&[f64]>,
    settings: &LassoSettings,
) -> Result<LassoSolution> {
    let d = cross.len();
    if gram.nrows() != d || gram.ncols() != d || weights.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "lasso: gram {}x{}, cross {}, weights {}",
            gram.nrows(),
            gram.ncols(),
            d,
            weights.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }

    let mut theta = match warm_start {
        Some(w) if w.len() == d => w.to_vec(),
        Some(_) => return Err(Error::DimensionMismatch("warm start length".into())),
        None => vec![0.0; d],
    };
    let column = |k: usize| &gram.as_slice()[k * d..(k + 1) * d];
    // q = Xᵀ(y − Xθ)
    let mut q = cross.to_vec();
    for k in 0..d {
        if weights[k] == PenaltyWeight::Excluded || gram[(k, k)] <= 0.0 {
            theta[k] = 0.0;
        }
        if theta[k] != 0.0 {
            axpy(&mut q, -theta[k], column(k));
        }
    }

    let update = |k: usize, theta: &mut [f64], q: &mut [f64]| -> f64 {
        let gkk = gram[(k, k)];
        let old = theta[k];
        let rho = (q[k] + gkk * old) / m;
        let threshold = match weights[k] {
            PenaltyWeight::Penalized => lambda,
            PenaltyWeight::Unpenalized => 0.0,
            PenaltyWeight::Excluded => unreachable!(),
        };
        let new = soft_threshold(rho, threshold) / (gkk / m);
        let delta = new - old;
        if delta != 0.0 {
            theta[k] = new;
            axpy(q, -delta, column(k));
        }
        delta.abs()
    };

    let eligible: Vec<usize> = (0..d)
        .filter(|&k| weights[k] != PenaltyWeight::Excluded && gram[(k, k)] > 0.0)
        .collect();
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        if sweeps > settings.max_sweeps {
            return Err(Error::NoConvergence { solver: "coordinate descent", iterations: settings.max_sweeps });
        }
        let mut change = 0.0_f64;
        for &k in &eligible {
            change = change.max(update(k, &mut theta, &mut q));
        }
        if change < settings.tolerance {
            break;
        }
        // Cycle on the active set until it settles, then re-check everything.
        let active: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|&k| theta[k] != 0.0 || weights[k] == PenaltyWeight::Unpenalized)
            .collect();
        loop {
            sweeps += 1;
            if sweeps > settings.max_sweeps {
                return Err(Error::NoConvergence {
                    solver: "coordinate descent",
                    iterations: settings.max_sweeps,
                });
            }
            let mut change = 0.0_f64;
            for &k in &active {
                change = change.max(update(k, &mut theta, &mut q));
            }
            if change < settings.tolerance {
                break;
            }
            if sweeps % FACE_SOLVE_EVERY == 0 {
                if let Some(next) = face_solve(gram, cross, &q, m, weights, lambda, &active, &theta) {
                    for &k in &active {
                        let delta = next[k] - theta[k];
                        if delta != 0.0 {
                            axpy(&mut q, -delta, column(k));
                        }
                    }
                    theta = next;
                }
            }
        }
    }
    Ok(LassoSolution { coefficients: theta, sweeps })
}

/// Active-set sweeps between face steps.
const FACE_SOLVE_EVERY: usize = 2;

/// Smooth part plus penalty, up to the constant `yᵀy/m`.
fn lasso_objective(gram: &DMatrix<f64>, cross: &[f64], m: f64, weights: &[PenaltyWeight], lambda: f64, active: &[usize], theta: &[f64]) -> f64 {
    let d = cross.len();
    let g = gram.as_slice();
    let mut quad = 0.0;
    let mut lin = 0.0;
    let mut pen = 0.0;
    for &a in active {
        lin += theta[a] * cross[a];
        let col = &g[a * d..(a + 1) * d];
        let inner: f64 = active.iter().map(|&b| col[b] * theta[b]).sum();
        quad += theta[a] * inner;
        if weights[a] == PenaltyWeight::Penalized {
            pen += theta[a].abs();
        }
    }
    (quad - 2.0 * lin) / m + 2.0 * lambda * pen
}

/// Step toward the minimizer of the objective on the current sign face,
/// `G_FF θ_F = c_F − mλ s_F` over the nonzero (or unpenalized) coordinates
/// `F`. The step stops where the first coefficient would change sign, and
/// that coefficient is set to zero. Returned only when the objective does
/// not rise.
#[allow(clippy::too_many_arguments)]
fn face_solve(
    gram: &DMatrix<f64>,
    cross: &[f64],
    q: &[f64],
    m: f64,
    weights: &[PenaltyWeight],
    lambda: f64,
    active: &[usize],
    theta: &[f64],
) -> Option<Vec<f64>> {
    let face: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&k| theta[k] != 0.0 || weights[k] == PenaltyWeight::Unpenalized)
        .collect();
    if face.is_empty() {
        return None;
    }
    let n = face.len();
    let g = DMatrix::from_fn(n, n, |r, c| gram[(face[r], face[c])]);
    let rhs = DVector::from_fn(n, |r, _| {
        let k = face[r];
        match weights[k] {
            PenaltyWeight::Penalized => cross[k] - m * lambda * theta[k].signum(),
            _ => cross[k],
        }
    });
    let sol = cholesky_dense(&g).ok()?.solve_vec(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut step = 1.0;
    let mut blocking = None;
    for (r, &k) in face.iter().enumerate() {
        if weights[k] == PenaltyWeight::Penalized && sol[r] * theta[k] <= 0.0 {
            let t = theta[k] / (theta[k] - sol[r]);
            if t < step {
                step = t;
                blocking = Some(k);
            }
        }
    }
    let mut next = theta.to_vec();
    for (r, &k) in face.iter().enumerate() {
        next[k] = theta[k] + step * (sol[r] - theta[k]);
    }
    if let Some(k) = blocking {
        next[k] = 0.0;
    }
    // With q = c − Gθ, θᵀGθ − 2θᵀc = −θᵀ(c + q).
    let before = face
        .iter()
        .map(|&k| {
            let pen = if weights[k] == PenaltyWeight::Penalized { 2.0 * lambda * theta[k].abs() } else { 0.0 };
            -theta[k] * (cross[k] + q[k]) / m + pen
        })
        .sum::<f64>();
    let after = lasso_objective(gram, cross, m, weights, lambda, &face, &next);
    (after <= before).then_some(next)
}

/// Coefficients of one node regressed on all others.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodFit {
    node: usize,
    /// Indexed by `i′ ≠ node` in increasing order.
    coefficients: Vec<f64>,
    lambda: f64,
    sweeps: usize,
}

impl NeighborhoodFit {
    pub fn new(node: usize, coefficients: Vec<f64>, lambda: f64) -> Self {
        NeighborhoodFit { node, coefficients, lambda, sweeps: 0 }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Coefficient on node `other`, or `None` for the node itself.
    pub fn coefficient(&self, other: usize) -> Option<f64> {
        match other.cmp(&self.node) {
            std::cmp::Ordering::Less => self.coefficients.get(other).copied(),
            std::cmp::Ordering::Greater => self.coefficients.get(other - 1).copied(),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Coefficients expanded to length `p` with a zero at `node`.
    pub fn full(&self) -> Vec<f64> {
        let mut v = self.coefficients.clone();
        v.insert(self.node, 0.0);
        v
    }

    fn from_full(node: usize, full: &[f64], lambda: f64, sweeps: usize) -> Self {
        let coefficients = full
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != node)
            .map(|(_, &v)| v)
            .collect();
        NeighborhoodFit { node, coefficients, lambda, sweeps }
    }
}

/// Penalty weights for regressing `node` on the rest.
pub(crate) fn node_weights(status: &[i8], p: usize, node: usize) -> Vec<PenaltyWeight> {
    (0..p)
        .map(|k| {
            if k == node {
                PenaltyWeight::Excluded
            } else {
                match status[node * p + k] {
                    1 => PenaltyWeight::Unpenalized,
                    -1 => PenaltyWeight::Excluded,
                    _ => PenaltyWeight::Penalized,
                }
            }
        })
        .collect()
}

/// Solves one node's regression against a precomputed Gram matrix.
pub(crate) fn fit_node(
    gram: &DMatrix<f64>,
    m: f64,
    status: &[i8],
    node: usize,
    lambda: f64,
    warm_start: Option<&[f64]>,
    settings: &LassoSettings,
) -> Result<(Vec<f64>, usize)> {
    let p = gram.nrows();
    let weights = node_weights(status, p, node);
    let cross: Vec<f64> = gram.column(node).iter().copied().collect();
    let sol = solve_weighted_lasso(gram, &cross, m, &weights, lambda, warm_start, settings)?;
    Ok((sol.coefficients, sol.sweeps))
}

/// Weighted lasso for node `i` under the given constraints.
pub fn weighted_lasso(
    z: &StandardizedData,
    i: usize,
    c: &EdgeConstraints,
    lambda: f64,
) -> Result<NeighborhoodFit> {
    weighted_lasso_with(z, i, c, lambda, &LassoSettings::default())
}

pub fn weighted_lasso_with(
    z: &StandardizedData,
    i: usize,
    c: &EdgeConstraints,
    lambda: f64,
    settings: &LassoSettings,
) -> Result<NeighborhoodFit> {
    let p = z.variables();
    check_dims(z, c)?;
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, dim: p });
    }
    let gram = z.columns().tr_mul(z.columns());
    let status = c.status_table();
    let (full, sweeps) = fit_node(&gram, z.samples() as f64, &status, i, lambda, None, settings)?;
    Ok(NeighborhoodFit::from_full(i, &full, lambda, sweeps))
}

/// Fits every node at a common `λ`, in parallel.
pub fn fit_all_nodes(
    z: &StandardizedData,
    c: &EdgeConstraints,
    lambda: f64,
    settings: &LassoSettings,
) -> Result<Vec<NeighborhoodFit>> {
    check_dims(z, c)?;
    let p = z.variables();
    let gram = z.columns().tr_mul(z.columns());
    let status = c.status_table();
    let m = z.samples() as f64;
    (0..p)
        .into_par_iter()
        .map(|i| {
            let (full, sweeps) = fit_node(&gram, m, &status, i, lambda, None, settings)?;
            Ok(NeighborhoodFit::from_full(i, &full, lambda, sweeps))
        })
        .collect()
}

pub(crate) fn check_dims(z: &StandardizedData, c: &EdgeConstraints) -> Result<()> {
    if c.dim() != z.variables() {
        return Err(Error::DimensionMismatch(format!(
            "constraints cover {} nodes, data has {} variables",
            c.dim(),
            z.variables()
        )));
    }
    Ok(())
}

/// Largest violation of the lasso optimality conditions for one fit.
///
/// Free coordinates need `|Zₖᵀr/m| ≤ λ`, with equality (and matching sign)
/// where the coefficient is nonzero; unpenalized coordinates need
/// `Zₖᵀr/m = 0`; excluded coordinates must be exactly zero.
pub fn lasso_kkt_residual(z: &StandardizedData, fit: &NeighborhoodFit, c: &EdgeConstraints) -> f64 {
    let p = z.variables();
    let m = z.samples() as f64;
    let theta = fit.full();
    let zc = z.columns();
    let mut resid = zc.column(fit.node()).clone_owned();
    for (k, &t) in theta.iter().enumerate() {
        if t != 0.0 {
            resid -= zc.column(k) * t;
        }
    }
    let status = c.status_table();
    let weights = node_weights(&status, p, fit.node());
    let lambda = fit.lambda();
    let mut worst = 0.0_f64;
    for k in 0..p {
        let corr = zc.column(k).dot(&resid) / m;
        let v = match weights[k] {
            PenaltyWeight::Excluded => {
                if k != fit.node() && theta[k] != 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            PenaltyWeight::Unpenalized => corr.abs(),
            PenaltyWeight::Penalized => {
                if theta[k] == 0.0 {
                    (corr.abs() - lambda).max(0.0)
                } else {
                    (corr - lambda * theta[k].signum()).abs()
                }
            }
        };
        worst = worst.max(v);
    }
    worst
}
