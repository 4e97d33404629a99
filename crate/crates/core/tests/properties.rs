use std::collections::BTreeSet;

use nalgebra::DMatrix;
use netgsa::estimator::{
    constrained_mle, fit_all_nodes, gaussian_objective, lasso_kkt_residual, standardize, LassoSettings,
};
use netgsa::graph::{
    all_pairs, influence_from_adjacency, influence_matrix, normalize_adjacency, AdjacencyMatrix, EdgeConstraints,
    InfluenceMatrix, NodePair,
};
use netgsa::linalg::SymMatrix;
use netgsa::mlm::{
    bh_q_values, bh_reject, contrast_vector, fit_mixed_model, gls_residuals, newton_fit_tau, profile_reml,
    run_netgsa, NetgsaOptions, NewtonSettings, Pathway, TwoConditionDesign,
};
use netgsa::sim::{generate_network, min_eigenvalue, Condition, ExperimentConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_adjacency(p: usize, density: f64, rng: &mut ChaCha8Rng) -> AdjacencyMatrix {
    let mut edges: Vec<(NodePair, f64)> = Vec::new();
    for e in all_pairs(p) {
        if rng.random::<f64>() < density {
            edges.push((e, rng.random_range(-1.0..1.0)));
        }
    }
    AdjacencyMatrix::from_edges(p, edges).unwrap()
}

fn random_constraints(p: usize, frac: f64, rng: &mut ChaCha8Rng) -> EdgeConstraints {
    let (mut e1, mut e0) = (Vec::new(), Vec::new());
    for e in all_pairs(p) {
        if rng.random::<f64>() < frac {
            if rng.random::<bool>() {
                e1.push(e);
            } else {
                e0.push(e);
            }
        }
    }
    EdgeConstraints::new(p, e1, e0).unwrap()
}

fn random_design(p: usize, n1: usize, n2: usize, seed: u64) -> TwoConditionDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l1 = influence_from_adjacency(&random_adjacency(p, 0.3, &mut rng), 0.5).unwrap();
    let l2 = influence_from_adjacency(&random_adjacency(p, 0.3, &mut rng), 0.5).unwrap();
    let y = gaussian(p, n1 + n2, &mut rng) * 1.3;
    TwoConditionDesign::new(y, n1, l1, l2).unwrap()
}

/// `p_R` with dense inverses and LU determinants.
fn dense_reml(tau: f64, d: &TwoConditionDesign, r: &DMatrix<f64>) -> f64 {
    let p = d.p();
    let big_n = d.total_observations() as f64;
    let mut logdet_sigma = 0.0;
    let mut rss = 0.0;
    let mut logdet_h = 0.0;
    for k in 0..2 {
        let l = d.influence(k).matrix();
        let sigma = DMatrix::identity(p, p) + l * l.transpose() * tau;
        let inv = sigma.clone().try_inverse().unwrap();
        let (start, len) = if k == 0 { (0, d.n1()) } else { (d.n1(), d.n2()) };
        logdet_sigma += len as f64 * sigma.determinant().ln();
        for j in start..start + len {
            let rj = r.column(j);
            rss += (rj.transpose() * &inv * rj)[(0, 0)];
        }
        logdet_h += (l.transpose() * &inv * l * len as f64).determinant().ln();
    }
    -0.5 * logdet_sigma - 0.5 * (big_n - 2.0 * p as f64) * rss.ln() - 0.5 * logdet_h
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn normalized_rows_are_substochastic(p in 2usize..12, zeta in 0.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_adjacency(p, 0.4, &mut rng);
        let n = normalize_adjacency(&a, zeta).unwrap();
        for i in 0..p {
            let s: f64 = n.weights().row(i).iter().map(|v| v.abs()).sum();
            let nonzero = a.weights().row(i).iter().any(|&v| v != 0.0);
            prop_assert!(s <= 1.0 + 1e-15);
            if zeta > 0.0 && nonzero {
                prop_assert!(s < 1.0);
            }
        }
    }

    #[test]
    fn contractions_invert(p in 2usize..12, zeta in 0.05f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = normalize_adjacency(&random_adjacency(p, 0.5, &mut rng), zeta).unwrap();
        let lambda = influence_matrix(&n);
        let prod = lambda.matrix() * (DMatrix::identity(p, p) - n.weights());
        prop_assert!((prod - DMatrix::identity(p, p)).amax() < 1e-8);
    }

    #[test]
    fn lasso_fits_satisfy_kkt(m in 8usize..30, p in 3usize..10, frac in 0.0f64..0.8, scale in 0.05f64..0.9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standardize(&gaussian(m, p, &mut rng)).unwrap();
        let c = random_constraints(p, frac, &mut rng);
        let fits = fit_all_nodes(&z, &c, scale * 0.5, &LassoSettings::default()).unwrap();
        for fit in &fits {
            prop_assert!(lasso_kkt_residual(&z, fit, &c) <= 1e-6);
            for &e in c.known_non_edges() {
                if let Some(other) = e.other(fit.node()) {
                    prop_assert_eq!(fit.coefficient(other), Some(0.0));
                }
            }
        }
    }

    #[test]
    fn constrained_mle_is_stationary_and_monotone(p in 2usize..12, density in 0.0f64..0.6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(5 * p, p, &mut rng);
        let s = SymMatrix::new(standardize(&x).unwrap().gram().into_inner()).unwrap();
        let support: BTreeSet<NodePair> = all_pairs(p).filter(|_| rng.random::<f64>() < density).collect();
        let est = constrained_mle(&s, &support).unwrap();
        let theta = est.matrix.as_matrix();
        let w = theta.clone().try_inverse().unwrap();
        let mut dual: f64 = 0.0;
        for i in 0..p {
            dual = dual.max((w[(i, i)] - s.get(i, i)).abs());
        }
        for e in all_pairs(p) {
            let (i, j) = (e.first(), e.second());
            if support.contains(&e) {
                dual = dual.max((w[(i, j)] - s.get(i, j)).abs());
            } else {
                prop_assert_eq!(theta[(i, j)], 0.0);
            }
        }
        prop_assert!(dual <= 1e-6, "dual residual {}", dual);
        let trace = &est.diagnostics.objective_trace;
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        prop_assert!((trace.last().unwrap() - gaussian_objective(&s, &est.matrix)).abs() < 1e-9);
    }

    #[test]
    fn newton_iterates_ascend(p in 2usize..8, n1 in 2usize..6, n2 in 2usize..6, seed in any::<u64>()) {
        let d = random_design(p, n1, n2, seed);
        let v = newton_fit_tau(&d, 0.5, &NewtonSettings::default()).unwrap();
        prop_assert!(v.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-10 * w[0].abs()));
        prop_assert!(v.sigma2_gamma >= 0.0 && v.sigma2_eps >= 0.0);
        prop_assert_eq!(v.sigma2_gamma, v.sigma2_eps * v.tau);
    }

    #[test]
    fn factorized_reml_matches_dense(p in 1usize..=10, n1 in 2usize..5, n2 in 2usize..5, tau in 0.0f64..5.0, seed in any::<u64>()) {
        let d = random_design(p, n1, n2, seed);
        let r = gls_residuals(&d, 0.7).unwrap();
        let fast = profile_reml(tau, &d, &r).unwrap();
        prop_assert!((fast - dense_reml(tau, &d, &r)).abs() <= 1e-9 * fast.abs().max(1.0));
    }

    #[test]
    fn statistic_is_scale_invariant(p in 3usize..8, c in 0.1f64..10.0, seed in any::<u64>()) {
        let d = random_design(p, 5, 4, seed);
        let scaled = TwoConditionDesign::new(d.data() * c, d.n1(), d.influence(0).clone(), d.influence(1).clone()).unwrap();
        let pw = vec![Pathway::from_indices("a", p, 0..2).unwrap(), Pathway::from_indices("b", p, 1..p).unwrap()];
        let base = run_netgsa(&d, &pw, &NetgsaOptions::default()).unwrap();
        let other = run_netgsa(&scaled, &pw, &NetgsaOptions::default()).unwrap();
        for (a, b) in base.results.iter().zip(&other.results) {
            prop_assert!((a.statistic - b.statistic).abs() <= 1e-8 * a.statistic.abs().max(1.0), "{} vs {}", a.statistic, b.statistic);
        }
    }

    #[test]
    fn bh_matches_step_up(p in prop::collection::vec(0.0f64..=1.0, 1..=20), level in 0.01f64..0.5) {
        let n = p.len();
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (1..=n).rev().find(|&k| sorted[k - 1] <= k as f64 * level / n as f64);
        let expected: Vec<bool> = p.iter().map(|&v| k.is_some_and(|k| v <= sorted[k - 1])).collect();
        prop_assert_eq!(bh_reject(&p, level), expected);
        let q = bh_q_values(&p);
        for (i, &v) in p.iter().enumerate() {
            let direct = (1..=n)
                .filter(|&j| sorted[j - 1] >= v)
                .map(|j| sorted[j - 1] * n as f64 / j as f64)
                .fold(1.0f64, f64::min);
            prop_assert!((q[i] - direct).abs() <= 1e-15);
        }
    }

    #[test]
    fn contrast_is_zero_outside_pathway(p in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = influence_from_adjacency(&random_adjacency(p, 0.4, &mut rng), 0.1).unwrap();
        let l2 = influence_from_adjacency(&random_adjacency(p, 0.4, &mut rng), 0.1).unwrap();
        let mut b: Vec<bool> = (0..p).map(|_| rng.random()).collect();
        b[0] = true;
        let l = contrast_vector(&b, &l1, &l2).unwrap();
        for i in (0..p).filter(|&i| !b[i]) {
            prop_assert_eq!(l[i], 0.0);
            prop_assert_eq!(l[p + i], 0.0);
        }
    }

    #[test]
    fn generated_networks_are_positive_definite(seed in any::<u64>(), rewire in any::<bool>()) {
        let cfg = ExperimentConfig::experiment1();
        let cond = if rewire { Condition::Alternative } else { Condition::Null };
        let net = generate_network(&cfg, cond, seed).unwrap();
        let a = net.precision.as_matrix();
        prop_assert_eq!(a, &a.transpose());
        prop_assert!(min_eigenvalue(a) > 1e-6);
    }
}

#[test]
fn zero_adjacency_has_identity_influence() {
    let z = normalize_adjacency(&AdjacencyMatrix::zeros(5), 0.0).unwrap();
    assert_eq!(influence_matrix(&z), InfluenceMatrix::identity(5));
}

#[test]
fn info_ratio_extremes() {
    assert_eq!(EdgeConstraints::new(6, [], []).unwrap().info_ratio(), 0.0);
    let all: Vec<NodePair> = all_pairs(6).collect();
    let full = EdgeConstraints::new(6, all[..4].to_vec(), all[4..].to_vec()).unwrap();
    assert_eq!(full.info_ratio(), 1.0);
}

#[test]
fn mixed_model_fit_is_reproducible() {
    let d = random_design(6, 5, 5, 3);
    let a = fit_mixed_model(&d, &NewtonSettings::default()).unwrap();
    let b = fit_mixed_model(&d, &NewtonSettings::default()).unwrap();
    assert_eq!(a, b);
}
