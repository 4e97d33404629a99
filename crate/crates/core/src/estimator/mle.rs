//! Gaussian likelihood maximization over precision matrices with a fixed
//! sparsity pattern.
//!
//! Minimizes `tr(SΘ) − log det Θ` subject to `Θᵢⱼ = 0` outside the support.
//! Each step solves the problem exactly in one row/column of `Θ` while the
//! rest is held fixed, so the objective never increases. `W = Θ⁻¹` is
//! carried along by rank-two updates and refactorized once per sweep.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::NodePair;
use crate::linalg::{cholesky, cholesky_dense, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleSettings {
    /// Stop when no entry of `Θ` moves by more than this in a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for MleSettings {
    fn default() -> Self {
        MleSettings { tolerance: 1e-9, max_sweeps: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleDiagnostics {
    pub sweeps: usize,
    /// `tr(SΘ) − log det Θ` at the start and after each sweep.
    pub objective_trace: Vec<f64>,
    /// `max |(Θ⁻¹ − S)ᵢⱼ|` over the diagonal and the support.
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub matrix: SymMatrix,
    pub support: BTreeSet<NodePair>,
    pub diagnostics: MleDiagnostics,
}

/// `tr(SΘ) − log det Θ`, or `+∞` when `Θ` is not positive definite.
pub fn gaussian_objective(sigma_hat: &SymMatrix, theta: &SymMatrix) -> f64 {
    match cholesky(theta) {
        Ok(f) => sigma_hat.as_matrix().component_mul(theta.as_matrix()).sum() - f.logdet(),
        Err(_) => f64::INFINITY,
    }
}

/// Maximum likelihood precision matrix whose off-diagonal nonzeros are
/// restricted to `support`.
pub fn constrained_mle(sigma_hat: &SymMatrix, support: &BTreeSet<NodePair>) -> Result<PrecisionEstimate> {
    constrained_mle_with(sigma_hat, support, &MleSettings::default())
}

pub fn constrained_mle_with(
    sigma_hat: &SymMatrix,
    support: &BTreeSet<NodePair>,
    settings: &MleSettings,
) -> Result<PrecisionEstimate> {
    let p = sigma_hat.dim();
    let s = sigma_hat.as_matrix();
    for i in 0..p {
        if !(s[(i, i)] > 0.0 && s[(i, i)].is_finite()) {
            return Err(Error::InvalidArgument(format!("sample variance {} at node {i}", s[(i, i)])));
        }
    }
    let mut neighbors = vec![Vec::new(); p];
    for pair in support {
        if pair.second() >= p {
            return Err(Error::IndexOutOfRange { index: pair.second(), dim: p });
        }
        neighbors[pair.first()].push(pair.second());
        neighbors[pair.second()].push(pair.first());
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }

    let mut theta = DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| 1.0 / s[(i, i)]));
    let mut w = DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| s[(i, i)]));
    let objective = |theta: &DMatrix<f64>| -> Result<f64> {
        let f = cholesky_dense(theta)?;
        Ok(s.component_mul(theta).sum() - f.logdet())
    };
    let mut trace = vec![objective(&theta)?];
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let mut change = 0.0_f64;
        for j in 0..p {
            change = change.max(update_row(s, &mut theta, &mut w, j, &neighbors[j])?);
        }
        let f = cholesky_dense(&theta)?;
        w = f.inverse().into_inner();
        trace.push(s.component_mul(&theta).sum() - f.logdet());
        if !trace.last().unwrap().is_finite() {
            break;
        }
        if change < settings.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { solver: "constrained likelihood", iterations: sweeps });
    }

    let mut dual = 0.0_f64;
    for i in 0..p {
        dual = dual.max((w[(i, i)] - s[(i, i)]).abs());
    }
    for pair in support {
        let (a, b) = (pair.first(), pair.second());
        dual = dual.max((w[(a, b)] - s[(a, b)]).abs());
    }
    Ok(PrecisionEstimate {
        matrix: SymMatrix::symmetrized(theta),
        support: support.clone(),
        diagnostics: MleDiagnostics { sweeps, objective_trace: trace, dual_residual: dual },
    })
}

/// Exact minimization over row/column `j` of `Θ`. Returns the largest
/// change in any entry.
fn update_row(
    s: &DMatrix<f64>,
    theta: &mut DMatrix<f64>,
    w: &mut DMatrix<f64>,
    j: usize,
    nbrs: &[usize],
) -> Result<f64> {
    let p = s.nrows();
    let d = nbrs.len();
    let sjj = s[(j, j)];
    let c = 1.0 / sjj;
    let wjj = w[(j, j)];

    // M = Θ₁₁⁻¹ = W₁₁ − w₁₂w₂₁/w₂₂, needed on the columns in `nbrs`.
    let mut m_cols = DMatrix::zeros(p, d);
    for (t, &a) in nbrs.iter().enumerate() {
        let wja = w[(j, a)] / wjj;
        for r in 0..p {
            if r != j {
                m_cols[(r, t)] = w[(r, a)] - w[(r, j)] * wja;
            }
        }
    }
    let mut theta_a = DVector::zeros(d);
    let mut u = DVector::zeros(p);
    if d > 0 {
        let m_aa = m_cols.select_rows(nbrs);
        let s_a = DVector::from_iterator(d, nbrs.iter().map(|&a| s[(a, j)]));
        let f = cholesky_dense(&SymMatrix::symmetrized(m_aa).into_inner())?;
        theta_a = -f.solve_vec(&s_a) * c;
        u = &m_cols * &theta_a;
        u[j] = 0.0;
    }
    let theta_jj = c + nbrs.iter().enumerate().map(|(t, &a)| theta_a[t] * u[a]).sum::<f64>();

    let mut change = (theta[(j, j)] - theta_jj).abs();
    theta[(j, j)] = theta_jj;
    for (t, &a) in nbrs.iter().enumerate() {
        change = change.max((theta[(j, a)] - theta_a[t]).abs());
        theta[(j, a)] = theta_a[t];
        theta[(a, j)] = theta_a[t];
    }

    // W₁₁ ← M + uuᵀ/c, w₁₂ ← −u/c, w₂₂ ← s_jj.
    let wj: Vec<f64> = (0..p).map(|r| w[(r, j)]).collect();
    for col in 0..p {
        if col == j {
            continue;
        }
        let a = wj[col] / wjj;
        let b = u[col] * sjj;
        for r in 0..p {
            if r != j {
                w[(r, col)] += -wj[r] * a + u[r] * b;
            }
        }
    }
    for r in 0..p {
        if r != j {
            w[(r, j)] = -u[r] * sjj;
            w[(j, r)] = w[(r, j)];
        }
    }
    w[(j, j)] = sjj;
    Ok(change)
}
