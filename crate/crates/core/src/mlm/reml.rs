//! Profile likelihood for the variance ratio `τ = σ²_γ/σ²_ε` and its
//! maximization by Newton's method in `log τ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_dense, CholeskyFactor, SymMatrix};

use super::design::{Likelihood, TwoConditionDesign};

/// `Σᵏ(τ) = I + τΛᵏΛᵏᵀ` and the quantities derived from it.
pub(crate) struct ConditionTerms {
    pub sigma_inv: DMatrix<f64>,
    pub logdet_sigma: f64,
    /// `Σ⁻¹Λ`
    pub g: DMatrix<f64>,
    /// `H = ΛᵀΣ⁻¹Λ`
    pub h: DMatrix<f64>,
    pub h_chol: CholeskyFactor,
}

fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

pub(crate) fn condition_terms(d: &TwoConditionDesign, k: usize, tau: f64) -> Result<ConditionTerms> {
    let mut sigma = d.outer(k) * tau;
    for i in 0..d.p() {
        sigma[(i, i)] += 1.0;
    }
    let f = cholesky_dense(&symmetrize(sigma))?;
    let sigma_inv = f.inverse().into_inner();
    let g = &sigma_inv * d.lambda(k);
    let h = symmetrize(d.lambda(k).tr_mul(&g));
    let h_chol = cholesky_dense(&h).map_err(|_| Error::SingularInformation { condition: k + 1 })?;
    Ok(ConditionTerms { sigma_inv, logdet_sigma: f.logdet(), g, h, h_chol })
}

pub(crate) fn both_terms(d: &TwoConditionDesign, tau: f64) -> Result<[ConditionTerms; 2]> {
    Ok([condition_terms(d, 0, tau)?, condition_terms(d, 1, tau)?])
}

/// GLS means `μ̂ᵏ = Hᵏ⁻¹ΛᵏᵀΣᵏ⁻¹Ȳᵏ`.
pub(crate) fn gls_means(d: &TwoConditionDesign, terms: &[ConditionTerms; 2]) -> [DVector<f64>; 2] {
    [0, 1].map(|k| terms[k].h_chol.solve_vec(&terms[k].g.tr_mul(d.mean(k))))
}

/// `Σⱼ RⱼRⱼᵀ` per condition for residuals at the given means.
pub(crate) fn profiled_scatter(d: &TwoConditionDesign, means: &[DVector<f64>; 2]) -> [DMatrix<f64>; 2] {
    [0, 1].map(|k| {
        let e = d.mean(k) - d.lambda(k) * &means[k];
        d.scatter(k) + (&e * e.transpose()) * d.count(k) as f64
    })
}

fn residual_scatter(d: &TwoConditionDesign, residuals: &DMatrix<f64>) -> Result<[DMatrix<f64>; 2]> {
    if residuals.shape() != (d.p(), d.n()) {
        return Err(Error::DimensionMismatch(format!(
            "residuals are {}x{}, expected {}x{}",
            residuals.nrows(),
            residuals.ncols(),
            d.p(),
            d.n()
        )));
    }
    Ok([0, 1].map(|k| {
        let start = if k == 0 { 0 } else { d.n1() };
        let block = residuals.columns(start, d.count(k));
        block * block.transpose()
    }))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ProfileParts {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    /// `Σⱼ RⱼᵀΣ⁻¹Rⱼ`
    pub q: f64,
}

fn multiplier(d: &TwoConditionDesign, lik: Likelihood) -> f64 {
    match lik {
        Likelihood::Reml => (d.total_observations() - 2 * d.p()) as f64,
        Likelihood::Ml => d.total_observations() as f64,
    }
}

pub(crate) fn profile_parts(
    d: &TwoConditionDesign,
    terms: &[ConditionTerms; 2],
    scatter: &[DMatrix<f64>; 2],
    lik: Likelihood,
) -> ProfileParts {
    let c = multiplier(d, lik);
    let p = d.p() as f64;
    let (mut q, mut q1, mut q2) = (0.0, 0.0, 0.0);
    let (mut value, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for k in 0..2 {
        let t = &terms[k];
        let nk = d.count(k) as f64;
        q += t.sigma_inv.component_mul(&scatter[k]).sum();
        let m = t.g.tr_mul(&(&scatter[k] * &t.g));
        q1 -= m.trace();
        q2 += 2.0 * t.h.component_mul(&m).sum();
        let tr_h = t.h.trace();
        let tr_hh = t.h.norm_squared();
        value -= 0.5 * nk * t.logdet_sigma;
        d1 -= 0.5 * nk * tr_h;
        d2 += 0.5 * nk * tr_hh;
        if lik == Likelihood::Reml {
            value -= 0.5 * (p * nk.ln() + t.h_chol.logdet());
            d1 += 0.5 * tr_h;
            d2 -= 0.5 * tr_hh;
        }
    }
    value -= 0.5 * c * q.ln();
    d1 -= 0.5 * c * q1 / q;
    d2 -= 0.5 * c * (q2 / q - (q1 / q) * (q1 / q));
    ProfileParts { value, d1, d2, q }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must be a nonnegative number, got {tau}")))
    }
}

/// Profile log-likelihood at `τ` for fixed residuals (columns = samples).
pub fn profile_likelihood(tau: f64, d: &TwoConditionDesign, residuals: &DMatrix<f64>, lik: Likelihood) -> Result<f64> {
    check_tau(tau)?;
    let scatter = residual_scatter(d, residuals)?;
    Ok(profile_parts(d, &both_terms(d, tau)?, &scatter, lik).value)
}

/// Restricted profile log-likelihood `p_R(τ)` up to an additive constant.
pub fn profile_reml(tau: f64, d: &TwoConditionDesign, residuals: &DMatrix<f64>) -> Result<f64> {
    profile_likelihood(tau, d, residuals, Likelihood::Reml)
}

/// First and second derivative in `τ` of the profile log-likelihood with the
/// residuals held fixed.
pub fn profile_derivatives(
    tau: f64,
    d: &TwoConditionDesign,
    residuals: &DMatrix<f64>,
    lik: Likelihood,
) -> Result<(f64, f64)> {
    check_tau(tau)?;
    let scatter = residual_scatter(d, residuals)?;
    let parts = profile_parts(d, &both_terms(d, tau)?, &scatter, lik);
    Ok((parts.d1, parts.d2))
}

pub fn reml_derivatives(tau: f64, d: &TwoConditionDesign, residuals: &DMatrix<f64>) -> Result<(f64, f64)> {
    profile_derivatives(tau, d, residuals, Likelihood::Reml)
}

/// Residuals `Rⱼ = Yⱼ − Λᵏμ̂ᵏ` with the means estimated by GLS at `τ`.
pub fn gls_residuals(d: &TwoConditionDesign, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    let means = gls_means(d, &both_terms(d, tau)?);
    Ok(residuals_at(d, &means))
}

fn residuals_at(d: &TwoConditionDesign, means: &[DVector<f64>; 2]) -> DMatrix<f64> {
    let fitted = [0, 1].map(|k| d.lambda(k) * &means[k]);
    let mut r = d.data().clone();
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col -= &fitted[d.condition_of(j)];
    }
    r
}

/// Crude variance split used to start the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub sigma2_eps: f64,
    pub sigma2_gamma: f64,
    pub tau0: f64,
}

/// Floor applied to the starting value of `τ`.
pub const TAU_INIT_FLOOR: f64 = 1e-4;

/// Method-of-moments split of the residual variances.
///
/// Each sample's residual vector has variance `(σ²_γ)ⱼ + σ²_ε`. The smallest
/// positive sample variance estimates `σ²_ε`; the excess of the remaining
/// ones over it, clamped at zero and averaged, estimates `σ²_γ`.
pub fn mom_components(residuals: &DMatrix<f64>) -> Result<MomentEstimate> {
    let (p, n) = residuals.shape();
    if n < 2 {
        return Err(Error::TooFewSamples { samples: n, required: 2 });
    }
    if p < 2 {
        return Err(Error::DimensionMismatch("residual vectors need at least two entries".into()));
    }
    let vars: Vec<f64> = residuals.column_iter().map(|c| c.variance() * p as f64 / (p - 1) as f64).collect();
    let (argmin, eps) = vars
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v > 0.0)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::DegenerateResiduals)?;
    let gamma = vars
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != argmin)
        .map(|(_, &v)| (v - eps).max(0.0))
        .sum::<f64>()
        / (n - 1) as f64;
    Ok(MomentEstimate { sigma2_eps: eps, sigma2_gamma: gamma, tau0: (gamma / eps).max(TAU_INIT_FLOOR) })
}

pub fn mom_init(residuals: &DMatrix<f64>) -> Result<f64> {
    Ok(mom_components(residuals)?.tau0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub likelihood: Likelihood,
    /// Converged when `|dp/d log τ|` falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub sufficient_increase: f64,
    pub shrink: f64,
    /// Bounds on `log τ`.
    pub log_tau_bounds: (f64, f64),
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            likelihood: Likelihood::Reml,
            gradient_tolerance: 1e-8,
            max_iterations: 50,
            sufficient_increase: 0.3,
            shrink: 0.5,
            log_tau_bounds: (-30.0, 30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub tau: f64,
    pub sigma2_eps: f64,
    pub sigma2_gamma: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    /// Final derivative of the profile likelihood in `log τ`.
    pub gradient: f64,
    /// Profile likelihood at the start and at every accepted iterate.
    pub objective_trace: Vec<f64>,
}

impl VarianceEstimate {
    /// Known variance components, for substituting true values.
    pub fn known(sigma2_gamma: f64, sigma2_eps: f64) -> Self {
        VarianceEstimate {
            tau: sigma2_gamma / sigma2_eps,
            sigma2_eps,
            sigma2_gamma,
            newton_iterations: 0,
            converged: true,
            gradient: 0.0,
            objective_trace: Vec::new(),
        }
    }
}

struct Iterate {
    log_tau: f64,
    parts: ProfileParts,
}

impl Iterate {
    fn at(d: &TwoConditionDesign, log_tau: f64, lik: Likelihood) -> Result<Self> {
        let tau = log_tau.exp();
        let terms = both_terms(d, tau)?;
        let scatter = profiled_scatter(d, &gls_means(d, &terms));
        Ok(Iterate { log_tau, parts: profile_parts(d, &terms, &scatter, lik) })
    }

    /// Gradient and curvature in `θ = log τ`.
    fn log_derivatives(&self) -> (f64, f64) {
        let tau = self.log_tau.exp();
        let g = tau * self.parts.d1;
        (g, tau * tau * self.parts.d2 + g)
    }
}

/// Maximizes the profile likelihood over `τ > 0` by damped Newton steps in
/// `log τ`. The means are re-estimated at every trial `τ`.
///
/// Returns the best iterate with `converged = false` when the iteration
/// budget runs out or the line search stalls.
pub fn newton_fit_tau(d: &TwoConditionDesign, tau0: f64, settings: &NewtonSettings) -> Result<VarianceEstimate> {
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(Error::InvalidArgument(format!("starting tau must be positive, got {tau0}")));
    }
    let (lo, hi) = settings.log_tau_bounds;
    let lik = settings.likelihood;
    let mut cur = Iterate::at(d, tau0.ln().clamp(lo, hi), lik)?;
    let mut trace = vec![cur.parts.value];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (g, h) = cur.log_derivatives();
        if g.abs() < settings.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations == settings.max_iterations {
            break;
        }
        iterations += 1;
        let direction = if h < 0.0 { -g / h } else { g };
        let direction = direction.clamp(-10.0, 10.0);
        let slack = 8.0 * f64::EPSILON * cur.parts.value.abs();
        let mut t = 1.0;
        let mut next = None;
        while t > 1e-12 {
            let theta = (cur.log_tau + t * direction).clamp(lo, hi);
            let moved = theta - cur.log_tau;
            if moved == 0.0 {
                break;
            }
            if let Ok(cand) = Iterate::at(d, theta, lik) {
                if cand.parts.value >= cur.parts.value + settings.sufficient_increase * g * moved - slack {
                    next = Some(cand);
                    break;
                }
            }
            t *= settings.shrink;
        }
        match next {
            Some(n) => {
                cur = n;
                trace.push(cur.parts.value);
            }
            None => break,
        }
    }
    let (g, _) = cur.log_derivatives();
    let tau = cur.log_tau.exp();
    let sigma2_eps = cur.parts.q / multiplier(d, lik);
    Ok(VarianceEstimate {
        tau,
        sigma2_eps,
        sigma2_gamma: sigma2_eps * tau,
        newton_iterations: iterations,
        converged,
        gradient: g,
        objective_trace: trace,
    })
}

/// Mean estimates, their covariance and residuals at given variance
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedModelFit {
    /// `μ̂¹` followed by `μ̂²`.
    pub beta: DVector<f64>,
    /// `C = (ΨᵀW⁻¹Ψ)⁻¹`, block diagonal.
    pub covariance: SymMatrix,
    pub variance: VarianceEstimate,
    /// `p × n`, columns are samples.
    pub residuals: DMatrix<f64>,
}

/// GLS estimate of the means, computed blockwise.
pub fn estimate_beta(d: &TwoConditionDesign, variance: &VarianceEstimate) -> Result<MixedModelFit> {
    if !(variance.sigma2_eps > 0.0 && variance.sigma2_eps.is_finite()) || !variance.tau.is_finite() {
        return Err(Error::InvalidArgument("variance components must be finite with σ²_ε > 0".into()));
    }
    check_tau(variance.tau)?;
    let p = d.p();
    let terms = both_terms(d, variance.tau)?;
    let means = gls_means(d, &terms);
    let mut beta = DVector::zeros(2 * p);
    let mut c = DMatrix::zeros(2 * p, 2 * p);
    for k in 0..2 {
        beta.rows_mut(k * p, p).copy_from(&means[k]);
        let block = terms[k].h_chol.inverse().into_inner() * (variance.sigma2_eps / d.count(k) as f64);
        c.view_mut((k * p, k * p), (p, p)).copy_from(&block);
    }
    Ok(MixedModelFit {
        beta,
        covariance: SymMatrix::symmetrized(c),
        variance: variance.clone(),
        residuals: residuals_at(d, &means),
    })
}

/// Start from GLS residuals at `τ = 0`, initialize by moments, run Newton,
/// then estimate the means at the fitted variances.
pub fn fit_mixed_model(d: &TwoConditionDesign, settings: &NewtonSettings) -> Result<MixedModelFit> {
    let r0 = gls_residuals(d, 0.0)?;
    let tau0 = mom_init(&r0)?;
    let variance = newton_fit_tau(d, tau0, settings)?;
    estimate_beta(d, &variance)
}
