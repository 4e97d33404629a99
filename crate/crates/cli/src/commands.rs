use std::collections::HashMap;

use nalgebra::DMatrix;
use netgsa::estimator::{estimate_network, EstimateOptions, LambdaGrid};
use netgsa::graph::{influence_from_adjacency, AdjacencyMatrix, EdgeConstraints, InfluenceMatrix};
use netgsa::io::{
    format_constraints, format_data_matrix, format_edge_list, format_gmt, format_labels, format_results,
    format_square_matrix, parse_constraints, parse_data_matrix, parse_gmt, parse_labels, parse_precision, DataMatrix,
};
use netgsa::mlm::{run_netgsa, Likelihood, NetgsaOptions, NewtonSettings, TwoConditionDesign};
use netgsa::sim::{experiment_pathways, generate_replicate, simulate, ExperimentConfig, SimulationPlan};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::args::{EstimateArgs, NetgsaArgs, SimulateArgs};
use crate::output::{in_file, read_input, CliError, Outputs};

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let data = parse_data_matrix(&read_input(&args.data)?, args.transpose).map_err(in_file(&args.data))?;
    let p = data.variables.len();
    let constraints = match &args.constraints {
        Some(path) => parse_constraints(&read_input(path)?, &data.variables).map_err(in_file(path))?,
        None => EdgeConstraints::new(p, [], [])?,
    };
    if args.folds < 2 {
        return Err(CliError::usage(format!("--folds must be at least 2, got {}", args.folds)));
    }
    let grid = match &args.lambda {
        Some(values) => {
            if values.is_empty() || values.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                return Err(CliError::usage("--lambda values must be positive"));
            }
            LambdaGrid::Explicit(values.clone())
        }
        None => {
            if args.grid_size == 0 || !(args.grid_min_ratio > 0.0 && args.grid_min_ratio <= 1.0) {
                return Err(CliError::usage("--grid-size must be positive and --grid-min-ratio in (0, 1]"));
            }
            LambdaGrid::Auto { count: args.grid_size, min_ratio: args.grid_min_ratio }
        }
    };
    let opts = EstimateOptions { grid, folds: args.folds, seed: args.common.seed, ..EstimateOptions::default() };
    let est = estimate_network(&data.values, &constraints, &opts)?;
    let precision = est.precision.matrix.as_matrix();

    let cv: Vec<_> = est.cv_scores.iter().map(|&(lambda, score)| json!({ "lambda": lambda, "score": score })).collect();
    let summary = json!({
        "variables": p,
        "samples": data.samples.len(),
        "lambda": est.lambda,
        "edges": est.edges().len(),
        "info_ratio": est.info_ratio,
        "kkt_residual": est.precision.diagnostics.dual_residual,
        "mle_sweeps": est.precision.diagnostics.sweeps,
        "seed": args.common.seed,
        "cv": cv,
    });
    let mut out = Outputs::new(&args.common.out);
    out.add("edges.tsv", format_edge_list(precision, &data.variables));
    out.add("precision.tsv", format_square_matrix(precision, &data.variables));
    out.add("adjacency.tsv", format_square_matrix(AdjacencyMatrix::from_precision(&est.precision.matrix).weights(), &data.variables));
    out.add("summary.json", pretty(&summary));
    out.commit()?;
    Ok(())
}

/// Columns of condition 1 then condition 2, each in file order.
fn split_conditions(data: &DataMatrix, labels: &[(String, u8)]) -> Result<(DMatrix<f64>, usize), CliError> {
    let label: HashMap<&str, u8> = labels.iter().map(|(s, c)| (s.as_str(), *c)).collect();
    if let Some(s) = data.samples.iter().find(|s| !label.contains_key(s.as_str())) {
        return Err(CliError::usage(format!("sample '{s}' has no condition label")));
    }
    if let Some((s, _)) = labels.iter().find(|(s, _)| !data.samples.contains(s)) {
        return Err(CliError::usage(format!("labelled sample '{s}' is not in the data matrix")));
    }
    let cond: Vec<u8> = data.samples.iter().map(|s| label[s.as_str()]).collect();
    let order: Vec<usize> = [1u8, 2].iter().flat_map(|&c| (0..cond.len()).filter(|&j| cond[j] == c).collect::<Vec<_>>()).collect();
    let n1 = cond.iter().filter(|&&c| c == 1).count();
    if n1 == 0 || n1 == order.len() {
        return Err(CliError::usage("both conditions need at least one sample"));
    }
    let p = data.variables.len();
    let y = DMatrix::from_fn(p, order.len(), |i, j| data.values[(order[j], i)]);
    Ok((y, n1))
}

fn influence(path: &std::path::Path, names: &[String], zeta: f64) -> Result<InfluenceMatrix, CliError> {
    let precision = parse_precision(&read_input(path)?, names).map_err(in_file(path))?;
    Ok(influence_from_adjacency(&AdjacencyMatrix::from_precision(&precision), zeta)?)
}

pub fn netgsa(args: &NetgsaArgs) -> Result<(), CliError> {
    if !(args.fdr > 0.0 && args.fdr < 1.0) {
        return Err(CliError::usage(format!("--fdr must be in (0, 1), got {}", args.fdr)));
    }
    if !(args.zeta >= 0.0) {
        return Err(CliError::usage(format!("--zeta must be nonnegative, got {}", args.zeta)));
    }
    let data = parse_data_matrix(&read_input(&args.data)?, args.transpose).map_err(in_file(&args.data))?;
    let labels = parse_labels(&read_input(&args.labels)?).map_err(in_file(&args.labels))?;
    let set = parse_gmt(&read_input(&args.pathways)?, &data.variables, args.min_size.max(1))
        .map_err(in_file(&args.pathways))?;
    for w in &set.warnings {
        eprintln!("netgsa: warning: {}: {w}", args.pathways.display());
    }
    let (y, n1) = split_conditions(&data, &labels)?;
    let l1 = influence(&args.precision1, &data.variables, args.zeta)?;
    let l2 = influence(&args.precision2, &data.variables, args.zeta)?;
    let design = TwoConditionDesign::new(y, n1, l1, l2)?;
    let likelihood = if args.ml { Likelihood::Ml } else { Likelihood::Reml };
    let opts = NetgsaOptions { newton: NewtonSettings { likelihood, ..NewtonSettings::default() }, fdr_level: args.fdr };
    let report = run_netgsa(&design, &set.pathways, &opts)?;
    let v = &report.fit.variance;
    if !v.converged {
        eprintln!("netgsa: warning: variance fit stopped after {} iterations (gradient {:e})", v.newton_iterations, v.gradient);
    }
    let fit = json!({
        "likelihood": likelihood,
        "tau": v.tau,
        "sigma2_gamma": v.sigma2_gamma,
        "sigma2_eps": v.sigma2_eps,
        "newton_iterations": v.newton_iterations,
        "converged": v.converged,
        "gradient": v.gradient,
        "n1": n1,
        "n2": design.n2(),
    });
    let mut out = Outputs::new(&args.common.out);
    out.add("results.tsv", format_results(&report.results));
    out.add("fit.json", pretty(&fit));
    out.commit()?;
    Ok(())
}

fn load_config(args: &SimulateArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => serde_json::from_str::<ExperimentConfig>(&read_input(path)?)
            .map_err(|e| CliError::usage(format!("{}: line {}: {e}", path.display(), e.line())))?,
        (None, Some(name)) => ExperimentConfig::preset(name)
            .ok_or_else(|| CliError::usage(format!("unknown preset '{name}' (experiment1 … experiment4)")))?,
        (None, None) => return Err(CliError::usage("either --config or --preset is required")),
    };
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn variable_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("g{i}")).collect()
}

/// Inputs of replicate 0 in the file formats the other subcommands read.
fn emit_data(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let rep = generate_replicate(cfg, 0)?;
    let names = variable_names(cfg.p);
    let design = &rep.data.design;
    let samples: Vec<String> =
        (0..design.n()).map(|j| if j < cfg.n1 { format!("c1_s{}", j + 1) } else { format!("c2_s{}", j + 1 - cfg.n1) }).collect();
    let labels: Vec<(String, u8)> = samples.iter().enumerate().map(|(j, s)| (s.clone(), if j < cfg.n1 { 1 } else { 2 })).collect();
    let expression = DataMatrix::new(samples, names.clone(), design.data().transpose())?;
    out.add("data/expression.tsv", format_data_matrix(&expression));
    out.add("data/labels.tsv", format_labels(&labels));
    out.add("data/pathways.gmt", format_gmt(&experiment_pathways(cfg), &names));

    let mut ratios: Vec<f64> = cfg.info_ratios.iter().chain(&cfg.power_ratios).copied().collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    let mut networks = Vec::new();
    for k in 0..2 {
        let cond = k + 1;
        let x = &rep.data.network_samples[k];
        let ids = (1..=x.nrows()).map(|i| format!("m{i}")).collect();
        out.add(format!("data/network_samples_{cond}.tsv"), format_data_matrix(&DataMatrix::new(ids, names.clone(), x.clone())?));
        out.add(format!("data/precision_true_{cond}.tsv"), format_square_matrix(rep.networks[k].precision.as_matrix(), &names));
        for &r in &ratios {
            let file = format!("constraints_{cond}_r{r}.tsv");
            out.add(format!("data/{file}"), format_constraints(&rep.constraints(k, r)?, &names));
            networks.push(json!({
                "condition": cond,
                "r": r,
                "samples": format!("network_samples_{cond}.tsv"),
                "constraints": file,
                "seed": rep.estimate_options(cfg, k, r).seed,
            }));
        }
    }
    let manifest = json!({
        "replicate": 0,
        "zeta": cfg.zeta,
        "fdr_level": cfg.fdr_level,
        "likelihood": cfg.likelihood,
        "folds": cfg.folds,
        "grid_size": cfg.lambda_grid_size,
        "networks": networks,
    });
    out.add("data/manifest.json", pretty(&manifest));
    Ok(())
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let config_text = pretty(&serde_json::to_value(&cfg).expect("config serializes"));
    let hash: String = Sha256::digest(config_text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let report = simulate(&cfg, &SimulationPlan::from_config(&cfg))?;
    let provenance = json!({
        "seed": cfg.seed,
        "config_sha256": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "replicates": cfg.replicates,
    });
    let mut out = Outputs::new(&args.out);
    out.add("deviance.tsv", report.deviance_tsv());
    out.add("power.tsv", report.power_tsv());
    out.add("config.json", config_text);
    out.add("provenance.json", pretty(&provenance));
    if args.emit_data {
        emit_data(&cfg, &mut out)?;
    }
    out.commit()?;
    print!("{}", report.render());
    Ok(())
}
