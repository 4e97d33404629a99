use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::ExperimentConfig;
use super::network::{Condition, TrueNetwork};
use crate::error::{Error, Result};
use crate::graph::{all_pairs, pair_count, EdgeConstraints, InfluenceMatrix, NodePair};
use crate::linalg::cholesky;
use crate::mlm::TwoConditionDesign;
use crate::rng::{stream, tag};

/// Mean vector for a condition: the baseline everywhere, plus the change on
/// `round(fraction·size)` uniformly chosen nodes of each subnetwork under the
/// alternative.
pub fn condition_means(cfg: &ExperimentConfig, condition: Condition, seed: u64) -> DVector<f64> {
    let mut mu = DVector::from_element(cfg.p, cfg.baseline_mean);
    if condition == Condition::Null {
        return mu;
    }
    for (s, &frac) in cfg.mean_change_fractions.iter().enumerate() {
        let size = cfg.subnetwork_size;
        let k = (frac * size as f64).round() as usize;
        let mut rng = stream(seed, &[tag::MEANS, s as u64]);
        for i in index::sample(&mut rng, size, k) {
            mu[s * size + i] += cfg.mean_change;
        }
    }
    mu
}

/// `m` draws from `N(0, A₀⁻¹)`, one per row.
pub fn network_samples(network: &TrueNetwork, m: usize, seed: u64, path: &[u64]) -> Result<DMatrix<f64>> {
    let f = cholesky(&network.precision)?;
    let p = network.precision.dim();
    let mut rng = stream(seed, path);
    let mut out = DMatrix::zeros(m, p);
    for r in 0..m {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        out.row_mut(r).copy_from(&f.solve_upper(&z).transpose());
    }
    Ok(out)
}

/// Expression matrix (`p × (n1 + n2)`) with `Y = Λᵏγ + ε`,
/// `γ ~ N(μᵏ, σ²_γ I)`, `ε ~ N(0, σ²_ε I)`.
#[allow(clippy::too_many_arguments)]
pub fn expression_data(
    influence: [&InfluenceMatrix; 2],
    means: [&DVector<f64>; 2],
    sigma_gamma: f64,
    sigma_eps: f64,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let p = means[0].len();
    if means[1].len() != p || influence.iter().any(|l| l.dim() != p) {
        return Err(Error::DimensionMismatch("means and influence matrices must share one dimension".into()));
    }
    let mut rng = stream(seed, &[tag::EXPRESSION]);
    let mut y = DMatrix::zeros(p, n1 + n2);
    for j in 0..n1 + n2 {
        let k = usize::from(j >= n1);
        let gamma = DVector::from_fn(p, |i, _| means[k][i] + sigma_gamma * rng.sample::<f64, _>(StandardNormal));
        let eps = DVector::from_fn(p, |_, _| sigma_eps * rng.sample::<f64, _>(StandardNormal));
        y.set_column(j, &(influence[k].matrix() * gamma + eps));
    }
    Ok(y)
}

/// Enrichment data plus independent network-learning samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub design: TwoConditionDesign,
    /// `m × p` per condition.
    pub network_samples: [DMatrix<f64>; 2],
}

/// Generates a replicate's data from the true networks and means.
pub fn generate_data(
    cfg: &ExperimentConfig,
    networks: [&TrueNetwork; 2],
    means: [&DVector<f64>; 2],
    seed: u64,
) -> Result<SimulatedData> {
    let influence = [networks[0].influence(cfg.zeta)?, networks[1].influence(cfg.zeta)?];
    let y = expression_data(
        [&influence[0], &influence[1]],
        means,
        cfg.sigma_gamma,
        cfg.sigma_eps,
        cfg.n1,
        cfg.n2,
        seed,
    )?;
    let [l1, l2] = influence;
    let design = TwoConditionDesign::new(y, cfg.n1, l1, l2)?;
    let network_samples = [
        network_samples(networks[0], cfg.m, seed, &[tag::NETWORK_SAMPLES, 0])?,
        network_samples(networks[1], cfg.m, seed, &[tag::NETWORK_SAMPLES, 1])?,
    ];
    Ok(SimulatedData { design, network_samples })
}

/// Reveals the status of `round(r·p(p−1)/2)` uniformly chosen pairs.
pub fn sample_constraints(edges: &BTreeSet<NodePair>, p: usize, r: f64, seed: u64) -> Result<EdgeConstraints> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("information ratio {r} outside [0, 1]")));
    }
    let total = pair_count(p);
    let k = ((r * total as f64).round() as usize).min(total);
    let mut rng = stream(seed, &[tag::CONSTRAINTS]);
    let mut chosen = index::sample(&mut rng, total, k).into_vec();
    chosen.sort_unstable();
    let mut known_edges = Vec::new();
    let mut known_non_edges = Vec::new();
    let mut next = chosen.into_iter().peekable();
    for (idx, pair) in all_pairs(p).enumerate() {
        if next.peek() == Some(&idx) {
            next.next();
            if edges.contains(&pair) {
                known_edges.push(pair);
            } else {
                known_non_edges.push(pair);
            }
        }
    }
    EdgeConstraints::new(p, known_edges, known_non_edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::network::generate_network;

    fn chain_edges(p: usize) -> BTreeSet<NodePair> {
        (0..p - 1).map(|i| NodePair::new(i, i + 1).unwrap()).collect()
    }

    #[test]
    fn constraint_counts() {
        let e = chain_edges(8);
        let c = sample_constraints(&e, 8, 0.0, 1).unwrap();
        assert!(c.known_edges().is_empty() && c.known_non_edges().is_empty());
        let c = sample_constraints(&e, 8, 0.5, 1).unwrap();
        assert_eq!(c.known_edges().len() + c.known_non_edges().len(), 14);
        assert!(c.known_edges().is_subset(&e));
        assert!(c.known_non_edges().is_disjoint(&e));
        let c = sample_constraints(&e, 8, 1.0, 1).unwrap();
        assert_eq!(c.known_edges(), &e);
        assert_eq!(c.known_non_edges().len(), 28 - 7);
    }

    #[test]
    fn noiseless_data_is_propagated_mean() {
        let cfg = ExperimentConfig::experiment1();
        let net = generate_network(&cfg, Condition::Null, 1).unwrap();
        let lambda = net.influence(cfg.zeta).unwrap();
        let mu = condition_means(&cfg, Condition::Alternative, 1);
        let y = expression_data([&lambda, &lambda], [&mu, &mu], 0.0, 0.0, 2, 3, 1).unwrap();
        let expected = lambda.matrix() * &mu;
        for col in y.column_iter() {
            assert_eq!(col, expected.column(0));
        }
    }

    #[test]
    fn identity_model_moments() {
        let p = 3;
        let id = InfluenceMatrix::identity(p);
        let mu = DVector::from_element(p, 1.0);
        let n = 10_000;
        let y = expression_data([&id, &id], [&mu, &mu], 0.8, 1.5, n / 2, n / 2, 4).unwrap();
        let mean = y.column_mean();
        let mut cov = DMatrix::zeros(p, p);
        for col in y.column_iter() {
            let c = col - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let target = 0.8f64.powi(2) + 1.5f64.powi(2);
        for i in 0..p {
            assert!((cov[(i, i)] / target - 1.0).abs() < 0.05, "{}", cov[(i, i)]);
            assert!((mean[i] - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn mean_changes_follow_fractions() {
        let cfg = ExperimentConfig::experiment1();
        let mu = condition_means(&cfg, Condition::Alternative, 2);
        let changed: Vec<usize> =
            (0..8).map(|s| cfg.members(s).filter(|&i| mu[i] != cfg.baseline_mean).count()).collect();
        assert_eq!(changed, vec![0, 3, 3, 4, 0, 3, 3, 4]);
        assert!(condition_means(&cfg, Condition::Null, 2).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn network_samples_have_target_covariance() {
        let cfg = ExperimentConfig { p: 16, subnetworks: 2, mean_change_fractions: vec![0.0; 2], structure_changed: vec![], ..ExperimentConfig::experiment1() };
        let net = generate_network(&cfg, Condition::Null, 6).unwrap();
        let x = network_samples(&net, 20_000, 6, &[tag::NETWORK_SAMPLES]).unwrap();
        let cov = x.transpose() * &x / 20_000.0;
        let truth = cholesky(&net.precision).unwrap().inverse();
        assert!((cov - truth.as_matrix()).abs().max() < 0.05);
    }

    #[test]
    fn data_is_reproducible() {
        let cfg = ExperimentConfig::experiment1();
        let n0 = generate_network(&cfg, Condition::Null, 3).unwrap();
        let n1 = generate_network(&cfg, Condition::Alternative, 3).unwrap();
        let m0 = condition_means(&cfg, Condition::Null, 3);
        let m1 = condition_means(&cfg, Condition::Alternative, 3);
        let a = generate_data(&cfg, [&n0, &n1], [&m0, &m1], 3).unwrap();
        let b = generate_data(&cfg, [&n0, &n1], [&m0, &m1], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.network_samples[0].shape(), (40, 64));
        assert_eq!(a.design.data().shape(), (64, 32));
    }
}
