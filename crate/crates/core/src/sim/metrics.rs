use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::all_pairs;
use crate::linalg::SymMatrix;

/// Edge-recovery and estimation-error summary of one estimated network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DevianceReport {
    pub fpr: f64,
    pub fnr: f64,
    pub mcc: f64,
    /// `‖Â − A₀‖_F / ‖A₀‖_F`.
    pub fnorm: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

/// Matthews correlation from confusion counts; zero when a margin is empty.
pub fn mcc(tp: usize, fp: usize, fn_: usize, tn: usize) -> f64 {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compares the off-diagonal supports and the entries of an estimate with
/// the truth.
pub fn deviance(estimate: &SymMatrix, truth: &SymMatrix) -> Result<DevianceReport> {
    let p = truth.dim();
    if estimate.dim() != p {
        return Err(Error::DimensionMismatch(format!("estimate is {}x{0}, truth is {p}x{p}", estimate.dim())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for e in all_pairs(p) {
        let est = estimate[(e.first(), e.second())] != 0.0;
        let tru = truth[(e.first(), e.second())] != 0.0;
        match (est, tru) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let diff = (estimate.as_matrix() - truth.as_matrix()).norm();
    Ok(DevianceReport {
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
        mcc: mcc(tp, fp, fn_, tn),
        fnorm: diff / truth.as_matrix().norm(),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    })
}

/// Kolmogorov–Smirnov distance between a sample and the uniform law on
/// `[0, 1]`.
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
