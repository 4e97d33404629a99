//! Pathway contrasts and their Wald tests with Satterthwaite degrees of
//! freedom.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::InfluenceMatrix;

use super::design::TwoConditionDesign;
use super::reml::{both_terms, gls_means, profiled_scatter, ConditionTerms, MixedModelFit};

/// `l = (−(bΛ¹)∘b, (bΛ²)∘b)`, where `(bΛ)ᵢ = Σ_{i′} b_{i′}Λ_{i′i}`.
///
/// Entries outside the pathway are zero in both halves, and `lβ` is
/// positive when pathway activity is higher under condition 2.
pub fn contrast_vector(b: &[bool], lambda1: &InfluenceMatrix, lambda2: &InfluenceMatrix) -> Result<DVector<f64>> {
    let p = b.len();
    if lambda1.dim() != p || lambda2.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "pathway indicator has length {p}, influence matrices are {} and {}",
            lambda1.dim(),
            lambda2.dim()
        )));
    }
    if !b.iter().any(|&x| x) {
        return Err(Error::EmptyPathway);
    }
    let mut l = DVector::zeros(2 * p);
    for (half, (lambda, sign)) in [(lambda1, -1.0), (lambda2, 1.0)].into_iter().enumerate() {
        let m = lambda.matrix();
        for i in (0..p).filter(|&i| b[i]) {
            let s: f64 = (0..p).filter(|&r| b[r]).map(|r| m[(r, i)]).sum();
            l[half * p + i] = sign * s;
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: f64,
    /// The Satterthwaite denominator was not positive and `N − 2p` was used.
    pub df_fallback: bool,
    pub p_value: f64,
}

/// Two-sided tail probability of a t variable with `df` degrees of freedom.
pub fn t_two_sided(statistic: f64, df: f64) -> f64 {
    if statistic == 0.0 {
        return 1.0;
    }
    if !statistic.is_finite() {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * t.sf(statistic.abs())).clamp(0.0, 1.0)
}

/// `lClᵀ` for a block-diagonal `C`.
pub fn contrast_variance(l: &DVector<f64>, c: &DMatrix<f64>) -> f64 {
    (l.transpose() * c * l)[(0, 0)]
}

/// Everything the Satterthwaite approximation needs from one fit, so many
/// contrasts can share it.
///
/// With `η = (σ²_γ, σ²_ε)`, `ω = ∂(lC(η)lᵀ)/∂η` comes from central
/// differences of `C(η)` and `V̂` is the inverse negative Hessian of the
/// restricted log-likelihood in `η`, itself a central difference of the
/// analytic gradient.
#[derive(Debug, Clone)]
pub struct Satterthwaite {
    /// `[(C(η + hᵢeᵢ), C(η − hᵢeᵢ), width)]` for `i = γ, ε`.
    perturbed: Vec<(DMatrix<f64>, DMatrix<f64>, f64)>,
    v_hat: Option<Matrix2<f64>>,
    fallback_df: f64,
}

fn step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

fn covariance_at(d: &TwoConditionDesign, eta: Vector2<f64>) -> Result<DMatrix<f64>> {
    let (gamma, eps) = (eta[0], eta[1]);
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("σ²_ε must stay positive".into()));
    }
    let terms = both_terms(d, gamma / eps)?;
    let p = d.p();
    let mut c = DMatrix::zeros(2 * p, 2 * p);
    for k in 0..2 {
        let block = terms[k].h_chol.inverse().into_inner() * (eps / d.count(k) as f64);
        c.view_mut((k * p, k * p), (p, p)).copy_from(&block);
    }
    Ok(c)
}

/// Analytic gradient in `η` of the restricted log-likelihood, with the
/// means at their GLS values for the given `η`.
pub(crate) fn reml_eta_gradient(d: &TwoConditionDesign, eta: Vector2<f64>) -> Result<Vector2<f64>> {
    let (gamma, eps) = (eta[0], eta[1]);
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("σ²_ε must stay positive".into()));
    }
    let terms: [ConditionTerms; 2] = both_terms(d, gamma / eps)?;
    let scatter = profiled_scatter(d, &gls_means(d, &terms));
    let (mut dg, mut de) = (0.0, 0.0);
    for k in 0..2 {
        let t = &terms[k];
        let nk = d.count(k) as f64;
        let s = &scatter[k];
        let si_s = &t.sigma_inv * s;
        de += -0.5 * nk * t.sigma_inv.trace() / eps
            + 0.5 * si_s.component_mul(&t.sigma_inv.transpose()).sum() / (eps * eps)
            + 0.5 * t.h_chol.solve(&t.g.tr_mul(&t.g)).trace() / eps;
        let tr_h = t.h.trace();
        dg += -0.5 * nk * tr_h / eps + 0.5 * t.g.tr_mul(&(s * &t.g)).trace() / (eps * eps) + 0.5 * tr_h / eps;
    }
    Ok(Vector2::new(dg, de))
}

/// Restricted log-likelihood in `η` up to a constant, for checks.
#[cfg(test)]
pub(crate) fn reml_eta_loglik(d: &TwoConditionDesign, eta: Vector2<f64>) -> f64 {
    let (gamma, eps) = (eta[0], eta[1]);
    let terms = both_terms(d, gamma / eps).unwrap();
    let scatter = profiled_scatter(d, &gls_means(d, &terms));
    let p = d.p() as f64;
    let mut v = 0.0;
    for k in 0..2 {
        let t = &terms[k];
        let nk = d.count(k) as f64;
        v -= 0.5 * nk * (p * eps.ln() + t.logdet_sigma);
        v -= 0.5 * t.sigma_inv.component_mul(&scatter[k]).sum() / eps;
        v -= 0.5 * (p * (nk / eps).ln() + t.h_chol.logdet());
    }
    v
}

impl Satterthwaite {
    pub fn new(d: &TwoConditionDesign, fit: &MixedModelFit) -> Result<Self> {
        let eta = Vector2::new(fit.variance.sigma2_gamma, fit.variance.sigma2_eps);
        let mut perturbed = Vec::with_capacity(2);
        let mut hessian = Matrix2::zeros();
        let mut hessian_ok = true;
        for i in 0..2 {
            let h = step(eta[i]);
            let mut up = eta;
            up[i] += h;
            let mut down = eta;
            down[i] -= h;
            let c_up = covariance_at(d, up)?;
            // Fall back to a one-sided difference if the lower point leaves
            // the parameter space.
            let (c_down, width, down) = match covariance_at(d, down) {
                Ok(c) => (c, 2.0 * h, down),
                Err(_) => (covariance_at(d, eta)?, h, eta),
            };
            perturbed.push((c_up, c_down, width));
            match (reml_eta_gradient(d, up), reml_eta_gradient(d, down)) {
                (Ok(gu), Ok(gd)) => hessian.set_column(i, &((gu - gd) / width)),
                _ => hessian_ok = false,
            }
        }
        let neg = -(hessian + hessian.transpose()) * 0.5;
        let v_hat = if hessian_ok { neg.try_inverse() } else { None };
        let fallback_df = (d.total_observations() - 2 * d.p()) as f64;
        Ok(Satterthwaite { perturbed, v_hat, fallback_df })
    }

    /// `V̂`, when the negative Hessian could be inverted.
    pub fn information_inverse(&self) -> Option<Matrix2<f64>> {
        self.v_hat
    }

    /// `∂(lClᵀ)/∂η`.
    pub fn omega(&self, l: &DVector<f64>) -> Vector2<f64> {
        Vector2::from_fn(|i, _| {
            let (up, down, width) = &self.perturbed[i];
            (contrast_variance(l, up) - contrast_variance(l, down)) / width
        })
    }

    /// `ν = 2(lClᵀ)²/(ωᵀV̂ω)`, flagged when the fallback `N − 2p` is used.
    pub fn degrees_of_freedom(&self, l: &DVector<f64>, lcl: f64) -> (f64, bool) {
        let Some(v) = self.v_hat else {
            return (self.fallback_df, true);
        };
        let w = self.omega(l);
        let denom = (w.transpose() * v * w)[(0, 0)];
        let nu = 2.0 * lcl * lcl / denom;
        if denom > 0.0 && nu.is_finite() && nu > 0.0 {
            (nu, false)
        } else {
            (self.fallback_df, true)
        }
    }
}

/// `TS = lβ̂/√(lĈlᵀ)` with a two-sided t p-value.
pub fn wald_test(l: &DVector<f64>, fit: &MixedModelFit, d: &TwoConditionDesign) -> Result<WaldResult> {
    wald_test_with(l, fit, &Satterthwaite::new(d, fit)?)
}

pub fn wald_test_with(l: &DVector<f64>, fit: &MixedModelFit, sat: &Satterthwaite) -> Result<WaldResult> {
    if l.len() != fit.beta.len() {
        return Err(Error::DimensionMismatch(format!("contrast length {} vs {}", l.len(), fit.beta.len())));
    }
    let lcl = contrast_variance(l, fit.covariance.as_matrix());
    if !(lcl > 0.0) {
        return Err(Error::InvalidArgument(format!("contrast variance {lcl} is not positive")));
    }
    let statistic = l.dot(&fit.beta) / lcl.sqrt();
    let (df, df_fallback) = sat.degrees_of_freedom(l, lcl);
    Ok(WaldResult { statistic, df, df_fallback, p_value: t_two_sided(statistic, df) })
}
