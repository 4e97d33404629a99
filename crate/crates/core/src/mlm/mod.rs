//! Network-based gene set analysis with a two-condition mixed linear model.
//!
//! Each sample follows `Y = Λᵏ(μᵏ + γ) + ε` with `γ ~ N(0, σ²_γ I)` and
//! `ε ~ N(0, σ²_ε I)`. The variance ratio is estimated by profile REML,
//! the means by GLS, and each pathway is tested through a contrast that
//! propagates the pathway's signal through the network.

mod design;
mod fdr;
mod reml;
mod wald;

use rayon::prelude::*;
use serde::Serialize;

pub use design::{build_design, DesignBlocks, Likelihood, TwoConditionDesign};
pub use fdr::{benjamini_hochberg, bh_q_values, bh_reject};
pub use reml::{
    estimate_beta, fit_mixed_model, gls_residuals, mom_components, mom_init, newton_fit_tau, profile_derivatives,
    profile_likelihood, profile_reml, reml_derivatives, MixedModelFit, MomentEstimate, NewtonSettings,
    VarianceEstimate, TAU_INIT_FLOOR,
};
pub use wald::{contrast_variance, contrast_vector, t_two_sided, wald_test, wald_test_with, Satterthwaite, WaldResult};

use crate::error::{Error, Result};

/// A named set of nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pathway {
    pub name: String,
    pub members: Vec<bool>,
}

impl Pathway {
    pub fn new(name: impl Into<String>, members: Vec<bool>) -> Self {
        Pathway { name: name.into(), members }
    }

    pub fn from_indices(name: impl Into<String>, p: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members = vec![false; p];
        for i in indices {
            *members.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, dim: p })? = true;
        }
        Ok(Pathway::new(name, members))
    }

    pub fn size(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwayTestResult {
    pub pathway: String,
    pub statistic: f64,
    pub df: f64,
    pub df_fallback: bool,
    pub p_value: f64,
    pub q_value: f64,
    pub reject: bool,
}

/// Fills in q-values and rejection flags.
pub fn fdr_adjust(results: &mut [PathwayTestResult], level: f64) {
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let (q, reject) = benjamini_hochberg(&p, level);
    for ((r, q), rej) in results.iter_mut().zip(q).zip(reject) {
        r.q_value = q;
        r.reject = rej;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetgsaOptions {
    pub newton: NewtonSettings,
    pub fdr_level: f64,
}

impl Default for NetgsaOptions {
    fn default() -> Self {
        NetgsaOptions { newton: NewtonSettings::default(), fdr_level: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetgsaReport {
    pub fit: MixedModelFit,
    pub results: Vec<PathwayTestResult>,
}

/// Tests every pathway against an existing fit and applies BH.
pub fn test_pathways(
    d: &TwoConditionDesign,
    fit: &MixedModelFit,
    pathways: &[Pathway],
    level: f64,
) -> Result<Vec<PathwayTestResult>> {
    if pathways.is_empty() {
        return Err(Error::InvalidArgument("no pathways to test".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR level {level} outside (0, 1)")));
    }
    let sat = Satterthwaite::new(d, fit)?;
    let mut results = pathways
        .par_iter()
        .map(|pw| {
            let l = contrast_vector(&pw.members, d.influence(0), d.influence(1))?;
            let w = wald_test_with(&l, fit, &sat)?;
            Ok(PathwayTestResult {
                pathway: pw.name.clone(),
                statistic: w.statistic,
                df: w.df,
                df_fallback: w.df_fallback,
                p_value: w.p_value,
                q_value: f64::NAN,
                reject: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fdr_adjust(&mut results, level);
    Ok(results)
}

/// Full analysis: variance estimation, mean estimation, one Wald test per
/// pathway, then FDR control.
pub fn run_netgsa(d: &TwoConditionDesign, pathways: &[Pathway], opts: &NetgsaOptions) -> Result<NetgsaReport> {
    let fit = fit_mixed_model(d, &opts.newton)?;
    let results = test_pathways(d, &fit, pathways, opts.fdr_level)?;
    Ok(NetgsaReport { fit, results })
}
