use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::Likelihood;

/// How the alternative network differs inside the designated subnetworks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureChange {
    /// Remove a fraction of the edges and add as many new ones.
    Rewire,
    /// Remove a fraction of the edges.
    Remove,
}

/// Sign of the off-diagonal precision entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSign {
    /// Negative precision entries, i.e. positive partial correlations.
    #[default]
    Positive,
    /// Independent fair coin per edge.
    Mixed,
}

/// Normalization offset of the experiment presets. With nonnegative weights a
/// small offset leaves `I − 𝒜` nearly singular, and the influence matrices of
/// two independently estimated networks then differ mostly along that
/// near-null direction.
pub const PRESET_ZETA: f64 = 1.0;

fn default_baseline() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_ratios() -> Vec<f64> {
    vec![0.0, 0.2, 0.8]
}
fn default_power_ratios() -> Vec<f64> {
    vec![0.2, 0.8]
}
fn default_folds() -> usize {
    10
}
fn default_fdr() -> f64 {
    0.05
}
fn default_zeta() -> f64 {
    crate::graph::DEFAULT_ZETA
}
fn default_weights() -> (f64, f64) {
    (0.3, 0.7)
}
fn default_min_eigenvalue() -> f64 {
    0.1
}
fn default_grid() -> usize {
    20
}
fn default_true() -> bool {
    true
}

/// One simulation design. Field names double as the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub p: usize,
    pub subnetworks: usize,
    pub subnetwork_size: usize,
    /// Edges inside each subnetwork; `subnetwork_size − 1` gives a tree.
    pub edges_per_subnetwork: usize,
    /// Chance, per ordered pair of subnetworks, of one linking edge.
    pub connection_probability: f64,
    #[serde(default = "default_baseline")]
    pub baseline_mean: f64,
    /// Fraction of nodes with a mean change, one entry per subnetwork.
    pub mean_change_fractions: Vec<f64>,
    pub mean_change: f64,
    /// Zero-based indices of subnetworks whose structure differs under the
    /// alternative.
    #[serde(default)]
    pub structure_changed: Vec<usize>,
    #[serde(default)]
    pub structure_change_fraction: f64,
    #[serde(default = "rewire")]
    pub structure_change: StructureChange,
    #[serde(default = "default_sigma")]
    pub sigma_gamma: f64,
    #[serde(default = "default_sigma")]
    pub sigma_eps: f64,
    /// Samples per condition for network estimation.
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Information ratios for the deviance table.
    #[serde(default = "default_ratios")]
    pub info_ratios: Vec<f64>,
    /// Information ratios for estimated-network power columns.
    #[serde(default = "default_power_ratios")]
    pub power_ratios: Vec<f64>,
    #[serde(default = "default_true")]
    pub exact_power: bool,
    #[serde(default = "default_true")]
    pub true_power: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_grid")]
    pub lambda_grid_size: usize,
    #[serde(default = "default_fdr")]
    pub fdr_level: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_weights")]
    pub weight_range: (f64, f64),
    #[serde(default)]
    pub edge_sign: EdgeSign,
    #[serde(default = "default_min_eigenvalue")]
    pub min_eigenvalue: f64,
    #[serde(default)]
    pub likelihood: Likelihood,
}

fn rewire() -> StructureChange {
    StructureChange::Rewire
}

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let size = self.subnetwork_size;
        if self.subnetworks == 0 || size < 2 {
            return Err(invalid("need at least one subnetwork of two or more nodes".into()));
        }
        if self.subnetworks * size != self.p {
            return Err(invalid(format!(
                "{} subnetworks of {} nodes do not partition p = {}",
                self.subnetworks, size, self.p
            )));
        }
        let max_edges = size * (size - 1) / 2;
        if self.edges_per_subnetwork < size - 1 || self.edges_per_subnetwork > max_edges {
            return Err(invalid(format!(
                "edges_per_subnetwork must lie in [{}, {}], got {}",
                size - 1,
                max_edges,
                self.edges_per_subnetwork
            )));
        }
        let frac = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        frac("connection_probability", self.connection_probability)?;
        frac("structure_change_fraction", self.structure_change_fraction)?;
        if self.mean_change_fractions.len() != self.subnetworks {
            return Err(invalid(format!(
                "mean_change_fractions has {} entries for {} subnetworks",
                self.mean_change_fractions.len(),
                self.subnetworks
            )));
        }
        for &f in &self.mean_change_fractions {
            frac("mean change fraction", f)?;
        }
        for &r in self.info_ratios.iter().chain(&self.power_ratios) {
            frac("information ratio", r)?;
        }
        if let Some(&s) = self.structure_changed.iter().find(|&&s| s >= self.subnetworks) {
            return Err(invalid(format!("structure_changed index {s} out of range")));
        }
        if !(self.sigma_gamma >= 0.0 && self.sigma_eps > 0.0) {
            return Err(invalid("need sigma_gamma >= 0 and sigma_eps > 0".into()));
        }
        if self.n1 == 0 || self.n2 == 0 || (self.n1 + self.n2) < 3 {
            return Err(invalid("need n1, n2 >= 1 and n1 + n2 >= 3".into()));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates must be at least 1".into()));
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(invalid(format!("weight_range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
        }
        if !(self.min_eigenvalue > 0.0) {
            return Err(invalid("min_eigenvalue must be positive".into()));
        }
        if !(self.fdr_level > 0.0 && self.fdr_level < 1.0) {
            return Err(invalid("fdr_level must lie in (0, 1)".into()));
        }
        if !(self.zeta >= 0.0) {
            return Err(invalid("zeta must be nonnegative".into()));
        }
        let needs_estimation = !self.info_ratios.is_empty() || !self.power_ratios.is_empty();
        if needs_estimation && (self.folds < 2 || self.m < 2 * self.folds) {
            return Err(invalid(format!("m = {} is too small for {}-fold cross-validation", self.m, self.folds)));
        }
        if self.lambda_grid_size == 0 {
            return Err(invalid("lambda_grid_size must be positive".into()));
        }
        Ok(())
    }

    /// Subnetwork of node `i`.
    pub fn subnetwork_of(&self, i: usize) -> usize {
        i / self.subnetwork_size
    }

    /// Nodes of subnetwork `s`.
    pub fn members(&self, s: usize) -> std::ops::Range<usize> {
        s * self.subnetwork_size..(s + 1) * self.subnetwork_size
    }

    /// The same design with no mean or structure change.
    pub fn null_variant(&self) -> Self {
        ExperimentConfig {
            name: format!("{}-null", self.name),
            mean_change_fractions: vec![0.0; self.subnetworks],
            structure_changed: Vec::new(),
            structure_change_fraction: 0.0,
            ..self.clone()
        }
    }

    /// p = 64: 8 tree-shaped subnetworks of 8 nodes.
    pub fn experiment1() -> Self {
        ExperimentConfig {
            name: "experiment1".into(),
            p: 64,
            subnetworks: 8,
            subnetwork_size: 8,
            edges_per_subnetwork: 7,
            connection_probability: 0.2,
            baseline_mean: 1.0,
            mean_change_fractions: vec![0.0, 0.4, 0.4, 0.5, 0.0, 0.4, 0.4, 0.5],
            mean_change: 1.0,
            structure_changed: vec![4, 5, 6, 7],
            structure_change_fraction: 0.1,
            structure_change: StructureChange::Rewire,
            sigma_gamma: 1.0,
            sigma_eps: 1.0,
            m: 40,
            n1: 16,
            n2: 16,
            replicates: 200,
            seed: 1,
            info_ratios: default_ratios(),
            power_ratios: default_power_ratios(),
            exact_power: true,
            true_power: true,
            folds: 10,
            lambda_grid_size: 20,
            fdr_level: 0.05,
            zeta: PRESET_ZETA,
            weight_range: default_weights(),
            edge_sign: EdgeSign::Positive,
            min_eigenvalue: 0.1,
            likelihood: Likelihood::Reml,
        }
    }

    /// p = 160: 8 tree-shaped subnetworks of 20 nodes, small mean shifts.
    pub fn experiment2() -> Self {
        ExperimentConfig {
            name: "experiment2".into(),
            p: 160,
            subnetwork_size: 20,
            edges_per_subnetwork: 19,
            mean_change_fractions: vec![0.0, 0.4, 0.6, 0.8, 0.0, 0.4, 0.6, 0.8],
            mean_change: 0.3,
            m: 100,
            n1: 40,
            n2: 40,
            seed: 2,
            ..Self::experiment1()
        }
    }

    /// p = 160 with 80 edges per subnetwork; half the edges vanish in
    /// subnetworks 5–8 under the alternative.
    pub fn experiment3() -> Self {
        ExperimentConfig {
            name: "experiment3".into(),
            edges_per_subnetwork: 80,
            connection_probability: 0.3,
            mean_change_fractions: vec![0.0, 0.3, 0.5, 0.9, 0.0, 0.3, 0.5, 0.9],
            mean_change: 0.6,
            structure_change_fraction: 0.5,
            structure_change: StructureChange::Remove,
            m: 300,
            seed: 3,
            ..Self::experiment2()
        }
    }

    /// p = 400: 20 subnetworks of 20 nodes with 40 edges each, in two
    /// groups of ten.
    pub fn experiment4() -> Self {
        let group = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.3, 0.3, 0.4];
        ExperimentConfig {
            name: "experiment4".into(),
            p: 400,
            subnetworks: 20,
            subnetwork_size: 20,
            edges_per_subnetwork: 40,
            connection_probability: 0.3,
            mean_change_fractions: group.iter().chain(&group).copied().collect(),
            mean_change: 0.5,
            structure_changed: (10..20).collect(),
            structure_change_fraction: 0.225,
            structure_change: StructureChange::Rewire,
            m: 300,
            n1: 40,
            n2: 40,
            seed: 4,
            ..Self::experiment1()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "experiment1" => Some(Self::experiment1()),
            "experiment2" => Some(Self::experiment2()),
            "experiment3" => Some(Self::experiment3()),
            "experiment4" => Some(Self::experiment4()),
            _ => None,
        }
    }
}
