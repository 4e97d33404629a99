use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "netgsa", version, about = "Network estimation with external edge information and network-based pathway tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a sparse precision matrix from a data matrix and known edges.
    EstimateNetwork(EstimateArgs),
    /// Test pathways for differential activity between two conditions.
    Netgsa(NetgsaArgs),
    /// Run a simulation experiment and write deviance and power tables.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice (CV folds, simulated data).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// TSV data matrix; first row variable names, first column sample ids.
    #[arg(long)]
    pub data: PathBuf,
    /// The data file has variables in rows and samples in columns.
    #[arg(long)]
    pub transpose: bool,
    /// Known edges and non-edges: `node_a<TAB>node_b<TAB>status`.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Number of log-spaced penalties on the automatic grid.
    #[arg(long, default_value_t = 20)]
    pub grid_size: usize,
    /// Smallest grid penalty as a fraction of the largest.
    #[arg(long, default_value_t = 0.01)]
    pub grid_min_ratio: f64,
    /// Explicit penalty grid, comma separated; replaces the automatic grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct NetgsaArgs {
    /// TSV expression matrix; first row variable names, first column sample ids.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub transpose: bool,
    /// Condition labels: `sample_id<TAB>condition` with condition 1 or 2.
    #[arg(long)]
    pub labels: PathBuf,
    /// GMT pathway file.
    #[arg(long)]
    pub pathways: PathBuf,
    /// Precision matrix of condition 1, as written by `estimate-network`.
    #[arg(long)]
    pub precision1: PathBuf,
    /// Precision matrix of condition 2.
    #[arg(long)]
    pub precision2: PathBuf,
    /// Row-normalization offset of the adjacency matrices.
    #[arg(long, default_value_t = netgsa::graph::DEFAULT_ZETA)]
    pub zeta: f64,
    /// FDR level q*.
    #[arg(long, default_value_t = 0.05)]
    pub fdr: f64,
    /// Pathways with fewer mapped members are skipped.
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    /// Maximum likelihood instead of REML.
    #[arg(long)]
    pub ml: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in experiment: experiment1 … experiment4.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the configured replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write the inputs of replicate 0 under `<out>/data`.
    #[arg(long)]
    pub emit_data: bool,
}
