//! Simulation harness: ground-truth networks, two-condition data, network
//! deviance and pathway power over replicates.
//!
//! Every replicate is a pure function of `(config, replicate index)`, so
//! tables are identical at any thread count.

mod config;
mod data;
mod metrics;
mod network;

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use config::{EdgeSign, ExperimentConfig, StructureChange};
pub use data::{condition_means, expression_data, generate_data, network_samples, sample_constraints, SimulatedData};
pub use metrics::{deviance, ks_uniform, mcc, DevianceReport};
pub use network::{
    alternative_topology, generate_network, min_eigenvalue, null_topology, precision_on, scale_free_edges, Condition,
    TrueNetwork,
};

use crate::error::Result;
use crate::estimator::{estimate_network, EstimateOptions, LambdaGrid, NetworkEstimate};
use crate::graph::{influence_from_adjacency, AdjacencyMatrix, EdgeConstraints};
use crate::mlm::{
    contrast_variance, contrast_vector, estimate_beta, run_netgsa, NetgsaOptions, NewtonSettings, Pathway,
    TwoConditionDesign, VarianceEstimate,
};
use crate::rng::{derive_seed, tag};

/// How the networks fed to the pathway test are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PowerMode {
    /// Networks estimated with a fraction `r` of pairs revealed.
    Estimated { r: f64 },
    /// The true networks; variances and means are estimated.
    Exact,
    /// Analytic power of the test with every parameter at its true value.
    True,
}

impl PowerMode {
    pub fn label(&self) -> String {
        match self {
            PowerMode::Estimated { r } => format!("r={r}"),
            PowerMode::Exact => "E".into(),
            PowerMode::True => "T".into(),
        }
    }

    /// The modes a config asks for, in table order.
    pub fn from_config(cfg: &ExperimentConfig) -> Vec<PowerMode> {
        let mut modes: Vec<PowerMode> = cfg.power_ratios.iter().map(|&r| PowerMode::Estimated { r }).collect();
        if cfg.exact_power {
            modes.push(PowerMode::Exact);
        }
        if cfg.true_power {
            modes.push(PowerMode::True);
        }
        modes
    }
}

/// One pathway per subnetwork.
pub fn experiment_pathways(cfg: &ExperimentConfig) -> Vec<Pathway> {
    (0..cfg.subnetworks)
        .map(|s| Pathway::from_indices(format!("pathway{}", s + 1), cfg.p, cfg.members(s)).unwrap())
        .collect()
}

/// Seed of replicate `rep`.
pub fn replicate_seed(cfg: &ExperimentConfig, rep: usize) -> u64 {
    derive_seed(cfg.seed, &[tag::REPLICATE, rep as u64])
}

/// Everything generated for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    /// Condition 1 uses the null network, condition 2 the alternative.
    pub networks: [TrueNetwork; 2],
    pub means: [DVector<f64>; 2],
    pub data: SimulatedData,
}

pub fn generate_replicate(cfg: &ExperimentConfig, rep: usize) -> Result<Replicate> {
    cfg.validate()?;
    let seed = replicate_seed(cfg, rep);
    let networks = [
        generate_network(cfg, Condition::Null, seed)?,
        generate_network(cfg, Condition::Alternative, seed)?,
    ];
    let means = [condition_means(cfg, Condition::Null, seed), condition_means(cfg, Condition::Alternative, seed)];
    let data = generate_data(cfg, [&networks[0], &networks[1]], [&means[0], &means[1]], seed)?;
    Ok(Replicate { index: rep, seed, networks, means, data })
}

fn ratio_tag(r: f64) -> u64 {
    r.to_bits()
}

impl Replicate {
    /// Constraints revealed for condition `k` (0 or 1) at ratio `r`.
    pub fn constraints(&self, k: usize, r: f64) -> Result<EdgeConstraints> {
        let p = self.networks[k].precision.dim();
        let seed = derive_seed(self.seed, &[tag::CONSTRAINTS, k as u64, ratio_tag(r)]);
        sample_constraints(&self.networks[k].edges, p, r, seed)
    }

    /// Network-estimation options for condition `k` at ratio `r`.
    pub fn estimate_options(&self, cfg: &ExperimentConfig, k: usize, r: f64) -> EstimateOptions {
        EstimateOptions {
            grid: LambdaGrid::Auto { count: cfg.lambda_grid_size, min_ratio: 0.01 },
            folds: cfg.folds,
            seed: derive_seed(self.seed, &[tag::ESTIMATION, k as u64, ratio_tag(r)]),
            ..EstimateOptions::default()
        }
    }

    /// Estimates condition `k`'s network from its learning sample.
    pub fn estimate(&self, cfg: &ExperimentConfig, k: usize, r: f64) -> Result<NetworkEstimate> {
        estimate_network(&self.data.network_samples[k], &self.constraints(k, r)?, &self.estimate_options(cfg, k, r))
    }
}

pub fn netgsa_options(cfg: &ExperimentConfig) -> NetgsaOptions {
    NetgsaOptions {
        newton: NewtonSettings { likelihood: cfg.likelihood, ..NewtonSettings::default() },
        fdr_level: cfg.fdr_level,
    }
}

/// Per-pathway outcome of one mode in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwayOutcome {
    /// Rejection indicator, or the analytic power in `True` mode.
    pub rejection: Vec<f64>,
    /// Empty in `True` mode.
    pub p_values: Vec<f64>,
}

/// Analytic two-sided level-`α` power of `lβ̂/√(lClᵀ)` at the true
/// parameters: `Φ(δ − z) + Φ(−δ − z)` with `δ = lβ/√(lClᵀ)`.
pub fn true_power(rep: &Replicate, cfg: &ExperimentConfig, pathways: &[Pathway]) -> Result<Vec<f64>> {
    let d = &rep.data.design;
    let known = VarianceEstimate::known(cfg.sigma_gamma.powi(2), cfg.sigma_eps.powi(2));
    let c = estimate_beta(d, &known)?.covariance;
    let p = cfg.p;
    let mut beta = DVector::zeros(2 * p);
    beta.rows_mut(0, p).copy_from(&rep.means[0]);
    beta.rows_mut(p, p).copy_from(&rep.means[1]);
    let normal = Normal::standard();
    let z = normal.inverse_cdf(1.0 - cfg.fdr_level / 2.0);
    pathways
        .iter()
        .map(|pw| {
            let l = contrast_vector(&pw.members, d.influence(0), d.influence(1))?;
            let delta = l.dot(&beta) / contrast_variance(&l, c.as_matrix()).sqrt();
            Ok(normal.cdf(delta - z) + normal.cdf(-delta - z))
        })
        .collect()
}

fn test_outcome(d: &TwoConditionDesign, pathways: &[Pathway], opts: &NetgsaOptions) -> Result<PathwayOutcome> {
    let report = run_netgsa(d, pathways, opts)?;
    Ok(PathwayOutcome {
        rejection: report.results.iter().map(|r| f64::from(u8::from(r.reject))).collect(),
        p_values: report.results.iter().map(|r| r.p_value).collect(),
    })
}

/// What to compute per replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub deviance_ratios: Vec<f64>,
    pub power_modes: Vec<PowerMode>,
}

impl SimulationPlan {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        SimulationPlan { deviance_ratios: cfg.info_ratios.clone(), power_modes: PowerMode::from_config(cfg) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    /// Per deviance ratio: `[condition 1, condition 2]`.
    pub deviance: Vec<[DevianceReport; 2]>,
    /// Per power mode.
    pub power: Vec<PathwayOutcome>,
}

pub fn run_replicate(cfg: &ExperimentConfig, plan: &SimulationPlan, rep: usize) -> Result<ReplicateOutcome> {
    let r = generate_replicate(cfg, rep)?;
    let mut ratios: Vec<f64> = plan.deviance_ratios.clone();
    for m in &plan.power_modes {
        if let PowerMode::Estimated { r } = m {
            ratios.push(*r);
        }
    }
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    let estimates: Vec<[NetworkEstimate; 2]> =
        ratios.iter().map(|&ratio| Ok([r.estimate(cfg, 0, ratio)?, r.estimate(cfg, 1, ratio)?])).collect::<Result<_>>()?;
    let lookup = |ratio: f64| &estimates[ratios.iter().position(|&x| x == ratio).unwrap()];

    let deviance = plan
        .deviance_ratios
        .iter()
        .map(|&ratio| {
            let [e0, e1] = lookup(ratio);
            Ok([
                deviance(&e0.precision.matrix, &r.networks[0].precision)?,
                deviance(&e1.precision.matrix, &r.networks[1].precision)?,
            ])
        })
        .collect::<Result<_>>()?;

    let pathways = experiment_pathways(cfg);
    let opts = netgsa_options(cfg);
    let power = plan
        .power_modes
        .iter()
        .map(|mode| match *mode {
            PowerMode::Exact => test_outcome(&r.data.design, &pathways, &opts),
            PowerMode::True => Ok(PathwayOutcome { rejection: true_power(&r, cfg, &pathways)?, p_values: Vec::new() }),
            PowerMode::Estimated { r: ratio } => {
                let [e0, e1] = lookup(ratio);
                let l1 = influence_from_adjacency(&AdjacencyMatrix::from_precision(&e0.precision.matrix), cfg.zeta)?;
                let l2 = influence_from_adjacency(&AdjacencyMatrix::from_precision(&e1.precision.matrix), cfg.zeta)?;
                let d = TwoConditionDesign::new(r.data.design.data().clone(), cfg.n1, l1, l2)?;
                test_outcome(&d, &pathways, &opts)
            }
        })
        .collect::<Result<_>>()?;
    Ok(ReplicateOutcome { deviance, power })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevianceRow {
    pub r: f64,
    pub condition: Condition,
    pub fpr: Summary,
    pub fnr: Summary,
    pub mcc: Summary,
    pub fnorm: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerTable {
    pub modes: Vec<PowerMode>,
    pub pathways: Vec<String>,
    /// `rates[pathway][mode]`.
    pub rates: Vec<Vec<f64>>,
    /// `p_values[mode][pathway]`, one per replicate; empty in `True` mode.
    pub p_values: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub replicates: usize,
    pub deviance: Vec<DevianceRow>,
    pub power: PowerTable,
}

/// Runs every replicate in parallel and aggregates in replicate order.
pub fn simulate(cfg: &ExperimentConfig, plan: &SimulationPlan) -> Result<SimulationReport> {
    cfg.validate()?;
    let outcomes: Vec<ReplicateOutcome> =
        (0..cfg.replicates).into_par_iter().map(|rep| run_replicate(cfg, plan, rep)).collect::<Result<_>>()?;
    Ok(aggregate(cfg, plan, &outcomes))
}

pub fn aggregate(cfg: &ExperimentConfig, plan: &SimulationPlan, outcomes: &[ReplicateOutcome]) -> SimulationReport {
    let mut deviance = Vec::new();
    for (i, &r) in plan.deviance_ratios.iter().enumerate() {
        for (k, condition) in [Condition::Null, Condition::Alternative].into_iter().enumerate() {
            let pick = |f: fn(&DevianceReport) -> f64| {
                Summary::of(&outcomes.iter().map(|o| f(&o.deviance[i][k])).collect::<Vec<_>>())
            };
            deviance.push(DevianceRow {
                r,
                condition,
                fpr: pick(|d| d.fpr),
                fnr: pick(|d| d.fnr),
                mcc: pick(|d| d.mcc),
                fnorm: pick(|d| d.fnorm),
            });
        }
    }
    let pathways: Vec<String> = experiment_pathways(cfg).into_iter().map(|p| p.name).collect();
    let n = outcomes.len() as f64;
    let rates = (0..pathways.len())
        .map(|j| (0..plan.power_modes.len()).map(|m| outcomes.iter().map(|o| o.power[m].rejection[j]).sum::<f64>() / n).collect())
        .collect();
    let p_values = (0..plan.power_modes.len())
        .map(|m| {
            (0..pathways.len())
                .map(|j| outcomes.iter().filter_map(|o| o.power[m].p_values.get(j).copied()).collect())
                .collect()
        })
        .collect();
    SimulationReport {
        replicates: outcomes.len(),
        deviance,
        power: PowerTable { modes: plan.power_modes.clone(), pathways, rates, p_values },
    }
}

/// Per-pathway rejection proportions for the given modes.
pub fn estimate_power(cfg: &ExperimentConfig, modes: &[PowerMode]) -> Result<PowerTable> {
    let plan = SimulationPlan { deviance_ratios: Vec::new(), power_modes: modes.to_vec() };
    Ok(simulate(cfg, &plan)?.power)
}

fn condition_label(c: Condition) -> &'static str {
    match c {
        Condition::Null => "null",
        Condition::Alternative => "alternative",
    }
}

impl SimulationReport {
    /// Deviance table, full precision.
    pub fn deviance_tsv(&self) -> String {
        let mut s = String::from("r\tcondition\tFPR\tFPR_sd\tFNR\tFNR_sd\tMCC\tMCC_sd\tFnorm\tFnorm_sd\n");
        for row in &self.deviance {
            let _ = write!(s, "{}\t{}", row.r, condition_label(row.condition));
            for m in [row.fpr, row.fnr, row.mcc, row.fnorm] {
                let _ = write!(s, "\t{:.16e}\t{:.16e}", m.mean, m.sd);
            }
            s.push('\n');
        }
        s
    }

    /// Power table, full precision: one row per pathway, one column per mode.
    pub fn power_tsv(&self) -> String {
        let t = &self.power;
        let mut s = String::from("pathway");
        for m in &t.modes {
            let _ = write!(s, "\t{}", m.label());
        }
        s.push('\n');
        for (name, row) in t.pathways.iter().zip(&t.rates) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, "\t{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    /// Both tables rounded to three digits, for reading.
    pub fn render(&self) -> String {
        let mut s = String::new();
        if !self.deviance.is_empty() {
            s.push_str("r\tcondition\tFPR\tFNR\tMCC\tFnorm\n");
            for row in &self.deviance {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{:.3} ({:.3})\t{:.3} ({:.3})\t{:.3} ({:.3})\t{:.3} ({:.3})",
                    row.r,
                    condition_label(row.condition),
                    row.fpr.mean,
                    row.fpr.sd,
                    row.fnr.mean,
                    row.fnr.sd,
                    row.mcc.mean,
                    row.mcc.sd,
                    row.fnorm.mean,
                    row.fnorm.sd
                );
            }
            s.push('\n');
        }
        let t = &self.power;
        if !t.modes.is_empty() {
            s.push_str("pathway");
            for m in &t.modes {
                let _ = write!(s, "\t{}", m.label());
            }
            s.push('\n');
            for (name, row) in t.pathways.iter().zip(&t.rates) {
                s.push_str(name);
                for v in row {
                    let _ = write!(s, "\t{v:.3}");
                }
                s.push('\n');
            }
        }
        s
    }
}
