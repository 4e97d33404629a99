use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::EdgeConstraints;
use crate::rng::{stream, tag};

use super::lasso::{check_dims, fit_node, LassoSettings};
use super::standardize::StandardizedData;

/// Fold index for each of `m` samples: a seeded shuffle dealt round-robin.
pub fn fold_assignment(m: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut stream(seed, &[tag::CV_FOLDS, m as u64, folds as u64]));
    let mut fold = vec![0; m];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

/// Cross-validated squared prediction error summed over all nodes, for every
/// `λ` in `grid`. Scores are returned in grid order.
///
/// Each fold fits a warm-started path from the largest `λ` down. A node's
/// path stops once a fit explains 99.9% of the training sum of squares or
/// runs out of sweeps; the skipped `λ` values score `+∞`.
pub fn cv_scores(
    z: &StandardizedData,
    c: &EdgeConstraints,
    grid: &[f64],
    folds: usize,
    seed: u64,
    settings: &LassoSettings,
) -> Result<Vec<f64>> {
    check_dims(z, c)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("grid value {bad} is not a positive number")));
    }
    let m = z.samples();
    let p = z.variables();
    if folds < 2 || m < 2 * folds {
        return Err(Error::TooFewSamples { samples: m, required: 2 * folds.max(2) });
    }
    let assignment = fold_assignment(m, folds, seed);
    let status = c.status_table();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..m).filter(|&r| assignment[r] != f).collect();
            let test: Vec<usize> = (0..m).filter(|&r| assignment[r] == f).collect();
            let ztrain = z.columns().select_rows(&train);
            let ztest = z.columns().select_rows(&test);
            let gram = ztrain.tr_mul(&ztrain);
            let mtrain = train.len() as f64;
            let per_node: Vec<Vec<f64>> = (0..p)
                .into_par_iter()
                .map(|i| -> Result<Vec<f64>> {
                    let mut scores = vec![f64::INFINITY; grid.len()];
                    let mut warm: Option<Vec<f64>> = None;
                    for &g in &order {
                        let theta = match fit_node(&gram, mtrain, &status, i, grid[g], warm.as_deref(), settings) {
                            Ok((theta, _)) => theta,
                            Err(Error::NoConvergence { .. }) => break,
                            Err(e) => return Err(e),
                        };
                        scores[g] = test_error(&ztest, i, &theta);
                        if explained_fraction(&gram, i, &theta) >= SATURATION {
                            break;
                        }
                        warm = Some(theta);
                    }
                    Ok(scores)
                })
                .collect::<Result<_>>()?;
            let mut total = vec![0.0; grid.len()];
            for node in &per_node {
                for (t, s) in total.iter_mut().zip(node) {
                    *t += s;
                }
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![0.0; grid.len()];
    for fold in &per_fold {
        for (t, s) in total.iter_mut().zip(fold) {
            *t += s;
        }
    }
    Ok(total)
}

/// Training fits explaining this share of the response's sum of squares end
/// the path; smaller penalties would only interpolate further.
const SATURATION: f64 = 0.999;

/// `1 − RSS/TSS` of a fit on the training Gram matrix.
fn explained_fraction(gram: &DMatrix<f64>, node: usize, theta: &[f64]) -> f64 {
    let tss = gram[(node, node)];
    let t = DVector::from_column_slice(theta);
    let rss = tss - 2.0 * t.dot(&gram.column(node)) + (gram * &t).dot(&t);
    1.0 - rss / tss
}

fn test_error(ztest: &DMatrix<f64>, node: usize, theta: &[f64]) -> f64 {
    let mut resid = ztest.column(node).clone_owned();
    for (k, &t) in theta.iter().enumerate() {
        if t != 0.0 {
            resid -= ztest.column(k) * t;
        }
    }
    resid.norm_squared()
}

/// Cross-validation score at a single `λ`.
pub fn cv_score(
    z: &StandardizedData,
    c: &EdgeConstraints,
    lambda: f64,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    Ok(cv_scores(z, c, &[lambda], folds, seed, &LassoSettings::default())?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// `(λ, score)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the grid value with the smallest cross-validation score. Ties go to
/// the larger `λ`.
pub fn select_lambda(
    z: &StandardizedData,
    c: &EdgeConstraints,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<LambdaSelection> {
    select_lambda_with(z, c, grid, folds, seed, &LassoSettings::default())
}

pub fn select_lambda_with(
    z: &StandardizedData,
    c: &EdgeConstraints,
    grid: &[f64],
    folds: usize,
    seed: u64,
    settings: &LassoSettings,
) -> Result<LambdaSelection> {
    let scores = cv_scores(z, c, grid, folds, seed, settings)?;
    let mut best = 0;
    for k in 1..grid.len() {
        let better = scores[k] < scores[best] || (scores[k] == scores[best] && grid[k] > grid[best]);
        if better {
            best = k;
        }
    }
    if !scores[best].is_finite() {
        return Err(Error::NoConvergence { solver: "coordinate descent", iterations: settings.max_sweeps });
    }
    Ok(LambdaSelection {
        lambda: grid[best],
        scores: grid.iter().copied().zip(scores).collect(),
    })
}

/// `count` log-spaced values from `λmax` down to `min_ratio·λmax`, where
/// `λmax = max_{i≠j} |Σ̂ᵢⱼ| / m` is the smallest penalty that zeroes every
/// unconstrained neighborhood.
pub fn default_grid(z: &StandardizedData, count: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::EmptyGrid);
    }
    if !(min_ratio > 0.0 && min_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid ratio {min_ratio} outside (0, 1]")));
    }
    let g = z.gram();
    let p = g.dim();
    let mut max = 0.0_f64;
    for j in 0..p {
        for i in 0..j {
            max = max.max(g[(i, j)].abs());
        }
    }
    let lmax = max.max(1e-12) / z.samples() as f64;
    if count == 1 {
        return Ok(vec![lmax]);
    }
    let step = min_ratio.ln() / (count - 1) as f64;
    Ok((0..count).map(|k| lmax * (step * k as f64).exp()).collect())
}
