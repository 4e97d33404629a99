//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criterion 4 is listed in `KNOWN_FAILURES`: with `Λ = I` the restricted
//! likelihood does not depend on `τ`, so no grid search can single out a
//! maximizer. The criterion still runs and still reports FAIL.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use netgsa::estimator::{constrained_mle, solve_weighted_lasso, standardize, LassoSettings, PenaltyWeight};
use netgsa::graph::{all_pairs, influence_from_adjacency, AdjacencyMatrix, InfluenceMatrix, NodePair};
use netgsa::linalg::SymMatrix;
use netgsa::mlm::{
    benjamini_hochberg, fit_mixed_model, gls_residuals, profile_reml, reml_derivatives, run_netgsa, NewtonSettings,
    TwoConditionDesign,
};
use netgsa::sim::{
    experiment_pathways, generate_replicate, netgsa_options, simulate, Condition, ExperimentConfig, PowerMode,
    SimulationPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;

const KNOWN_FAILURES: &[usize] = &[4];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_adjacency(p: usize, density: f64, rng: &mut ChaCha8Rng) -> AdjacencyMatrix {
    let mut edges = Vec::new();
    for e in all_pairs(p) {
        if rng.random::<f64>() < density {
            edges.push((e, rng.random_range(0.2..1.0)));
        }
    }
    AdjacencyMatrix::from_edges(p, edges).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut passed, mut worst) = (0, 0.0f64);
    for i in 0..100 {
        let p = [5, 10, 20][i % 3];
        let s = SymMatrix::new(standardize(&gaussian(5 * p, p, &mut rng)).unwrap().gram().into_inner()).unwrap();
        let density = rng.random_range(0.05..0.5);
        let support: BTreeSet<NodePair> = all_pairs(p).filter(|_| rng.random::<f64>() < density).collect();
        let theta = constrained_mle(&s, &support).unwrap().matrix.as_matrix().clone();
        let w = theta.clone().try_inverse().unwrap();
        let mut dual: f64 = (0..p).map(|i| (w[(i, i)] - s.get(i, i)).abs()).fold(0.0, f64::max);
        let mut zeros = true;
        for e in all_pairs(p) {
            let (a, b) = (e.first(), e.second());
            if support.contains(&e) {
                dual = dual.max((w[(a, b)] - s.get(a, b)).abs());
            } else {
                zeros &= theta[(a, b)] == 0.0 && theta[(b, a)] == 0.0;
            }
        }
        worst = worst.max(dual);
        if dual <= 1e-6 && zeros {
            passed += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        passed == 100 && elapsed < Duration::from_secs(60),
        format!("{passed}/100 instances, max dual residual {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn random_weights(d: usize, rng: &mut ChaCha8Rng) -> Vec<PenaltyWeight> {
    (0..d)
        .map(|_| match rng.random_range(0..10) {
            0 => PenaltyWeight::Excluded,
            1 | 2 => PenaltyWeight::Unpenalized,
            _ => PenaltyWeight::Penalized,
        })
        .collect()
}

/// Minimizes `(1/m)(θᵀGθ − 2cᵀθ) + 2λ Σ tₖ|θₖ|` by projected gradient on
/// `θ = u − v` with `u, v ≥ 0`.
fn split_oracle(gram: &DMatrix<f64>, cross: &[f64], m: f64, w: &[PenaltyWeight], lambda: f64) -> Vec<f64> {
    let d = cross.len();
    let free: Vec<usize> = (0..d).filter(|&k| w[k] != PenaltyWeight::Excluded).collect();
    let t: Vec<f64> = free.iter().map(|&k| if w[k] == PenaltyWeight::Penalized { 1.0 } else { 0.0 }).collect();
    let g = DMatrix::from_fn(free.len(), free.len(), |a, b| gram[(free[a], free[b])]);
    let c = DVector::from_iterator(free.len(), free.iter().map(|&k| cross[k]));
    let lipschitz = 4.0 / m * g.symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;
    let mut u = DVector::zeros(free.len());
    let mut v = DVector::zeros(free.len());
    for _ in 0..2_000_000 {
        let grad = (&g * (&u - &v) - &c) * (2.0 / m);
        let mut moved: f64 = 0.0;
        for k in 0..free.len() {
            let nu = (u[k] - step * (grad[k] + 2.0 * lambda * t[k])).max(0.0);
            let nv = (v[k] - step * (-grad[k] + 2.0 * lambda * t[k])).max(0.0);
            moved = moved.max((nu - u[k]).abs()).max((nv - v[k]).abs());
            u[k] = nu;
            v[k] = nv;
        }
        if moved < 1e-14 {
            break;
        }
    }
    let mut theta = vec![0.0; d];
    for (a, &k) in free.iter().enumerate() {
        theta[k] = u[a] - v[a];
    }
    theta
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let settings = LassoSettings::default();
    let mut closed_worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(2..=12);
        let m = rng.random_range(10..60) as f64;
        let gram = DMatrix::identity(d, d) * m;
        let cross: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) * m).collect();
        let w = random_weights(d, &mut rng);
        let lambda = rng.random_range(0.01..0.8);
        let sol = solve_weighted_lasso(&gram, &cross, m, &w, lambda, None, &settings).unwrap();
        for k in 0..d {
            let z = cross[k] / m;
            let expected = match w[k] {
                PenaltyWeight::Excluded => 0.0,
                PenaltyWeight::Unpenalized => z,
                PenaltyWeight::Penalized => z.signum() * (z.abs() - lambda).max(0.0),
            };
            closed_worst = closed_worst.max((sol.coefficients[k] - expected).abs());
        }
    }
    let mut oracle_worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(2..=8);
        let m = rng.random_range(3 * d..60);
        let x = gaussian(m, d, &mut rng);
        let y = gaussian(m, 1, &mut rng);
        let gram = x.transpose() * &x;
        let cross: Vec<f64> = (x.transpose() * y).iter().copied().collect();
        let w = random_weights(d, &mut rng);
        let lambda = rng.random_range(0.01..0.5);
        let sol = solve_weighted_lasso(&gram, &cross, m as f64, &w, lambda, None, &settings).unwrap();
        let oracle = split_oracle(&gram, &cross, m as f64, &w, lambda);
        for (a, b) in sol.coefficients.iter().zip(&oracle) {
            oracle_worst = oracle_worst.max((a - b).abs());
        }
    }
    check(
        closed_worst <= 1e-8 && oracle_worst <= 1e-5,
        format!("orthonormal max error {closed_worst:.2e}, split oracle max error {oracle_worst:.2e}"),
    )
}

fn random_design(p: usize, n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> TwoConditionDesign {
    let l1 = influence_from_adjacency(&random_adjacency(p, 3.0 / p as f64, rng), 0.5).unwrap();
    let l2 = influence_from_adjacency(&random_adjacency(p, 3.0 / p as f64, rng), 0.5).unwrap();
    let y = gaussian(p, n1 + n2, rng) * rng.random_range(0.5..3.0);
    TwoConditionDesign::new(y, n1, l1, l2).unwrap()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut g_worst, mut h_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let p = rng.random_range(5..=40);
        let d = random_design(p, rng.random_range(3..=8), rng.random_range(3..=8), &mut rng);
        let r = gls_residuals(&d, 1.0).unwrap();
        for j in 0..10 {
            let tau = 10f64.powf(-2.0 + 4.0 * j as f64 / 9.0);
            let h = 1e-4 * tau;
            let f = |t: f64| profile_reml(t, &d, &r).unwrap();
            let (g, hess) = reml_derivatives(tau, &d, &r).unwrap();
            let g_fd = (f(tau + h) - f(tau - h)) / (2.0 * h);
            let h_fd = (reml_derivatives(tau + h, &d, &r).unwrap().0 - reml_derivatives(tau - h, &d, &r).unwrap().0) / (2.0 * h);
            g_worst = g_worst.max(relative(g, g_fd));
            h_worst = h_worst.max(relative(hess, h_fd));
        }
    }
    check(
        g_worst <= 1e-5 && h_worst <= 1e-4,
        format!("200 evaluations, gradient rel. error {g_worst:.2e}, Hessian rel. error {h_worst:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut tau_worst, mut sigma_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let p = rng.random_range(2..=10);
        let (n1, n2) = (rng.random_range(3..=8), rng.random_range(3..=8));
        let scale = rng.random_range(0.5..2.0);
        let mut y = gaussian(p, n1 + n2, &mut rng) * scale;
        for j in n1..n1 + n2 {
            y.column_mut(j).add_scalar_mut(0.7);
        }
        let id = InfluenceMatrix::identity(p);
        let d = TwoConditionDesign::new(y.clone(), n1, id.clone(), id).unwrap();
        let fit = fit_mixed_model(&d, &NewtonSettings::default()).unwrap().variance;

        // Σ = (1 + τ)I and the GLS means are the per-condition sample means.
        let mut rss0 = 0.0;
        for (start, len) in [(0, n1), (n1, n2)] {
            let block = y.columns(start, len);
            for i in 0..p {
                let mean = block.row(i).sum() / len as f64;
                rss0 += block.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
        }
        let big_n = ((n1 + n2) * p) as f64;
        let dof = big_n - 2.0 * p as f64;
        let reml = |tau: f64| {
            let s = 1.0 + tau;
            -0.5 * big_n * s.ln() - 0.5 * dof * (rss0 / s).ln()
                - 0.5 * p as f64 * ((n1 as f64 / s).ln() + (n2 as f64 / s).ln())
        };
        let (mut best_tau, mut best) = (0.0, f64::NEG_INFINITY);
        for k in 0..=100_000 {
            let tau = k as f64 * 1e-4;
            let v = reml(tau);
            if v > best {
                best = v;
                best_tau = tau;
            }
        }
        let sigma_grid = rss0 / (1.0 + best_tau) / dof;
        tau_worst = tau_worst.max((fit.tau - best_tau).abs());
        sigma_worst = sigma_worst.max((fit.sigma2_eps - sigma_grid).abs());
    }
    check(
        tau_worst <= 1e-3 && sigma_worst <= 1e-3,
        format!(
            "max |τ̂ − τ_grid| {tau_worst:.3e}, max |σ̂²_ε − σ²_grid| {sigma_worst:.3e} \
             (restricted likelihood is constant in τ when Λ = I)"
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg = ExperimentConfig::experiment1();
    let plan = SimulationPlan { deviance_ratios: vec![0.0, 0.2, 0.8], power_modes: Vec::new() };
    let start = Instant::now();
    let report = simulate(&cfg, &plan).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for cond in [Condition::Null, Condition::Alternative] {
        let rows: Vec<_> = report.deviance.iter().filter(|row| row.condition == cond).collect();
        let mcc: Vec<f64> = rows.iter().map(|row| row.mcc.mean).collect();
        let fnorm: Vec<f64> = rows.iter().map(|row| row.fnorm.mean).collect();
        ok &= mcc.len() == 3 && mcc.windows(2).all(|w| w[1] > w[0]) && fnorm.windows(2).all(|w| w[1] < w[0]);
        ok &= (mcc[2] - 0.79).abs() <= 0.10;
        detail.push(format!("{cond:?}: MCC {mcc:.3?}, Fnorm {fnorm:.3?}"));
    }
    detail.push(format!("{} replicates in {:.0}s", report.replicates, start.elapsed().as_secs_f64()));
    check(ok, detail.join("; "))
}

fn exact_mode(cfg: &ExperimentConfig) -> (Vec<f64>, Vec<Vec<f64>>) {
    let plan = SimulationPlan { deviance_ratios: Vec::new(), power_modes: vec![PowerMode::Exact] };
    let report = simulate(cfg, &plan).unwrap();
    let rates = report.power.rates.iter().map(|r| r[0]).collect();
    (rates, report.power.p_values[0].clone())
}

fn criterion_6() -> Outcome {
    let cfg = ExperimentConfig::experiment1();
    let (rate, _) = exact_mode(&cfg);
    let ok = rate[0] <= 0.10 && (rate[7] - 0.82).abs() <= 0.15 && rate[7] > rate[4] && rate[3] > rate[0];
    check(ok, format!("{} replicates, rejection rates {rate:.3?}", cfg.replicates))
}

/// Kolmogorov–Smirnov distance to U(0, 1).
fn ks_distance(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

fn criterion_7() -> Outcome {
    let cfg = ExperimentConfig::experiment1().null_variant();
    let (rate, p_values) = exact_mode(&cfg);
    let ks: Vec<f64> = p_values.iter().map(|p| ks_distance(p)).collect();
    let ok = rate.iter().all(|&r| r <= 0.10) && ks.iter().all(|&k| k < 0.15);
    check(ok, format!("{} replicates, rejection rates {rate:.3?}, KS {ks:.3?}", cfg.replicates))
}

fn criterion_8() -> Outcome {
    let cfg = ExperimentConfig::experiment2();
    let settings = NewtonSettings::default();
    let mut converged = 0;
    for rep in 0..100 {
        let r = generate_replicate(&cfg, rep).unwrap();
        let v = fit_mixed_model(&r.data.design, &settings).unwrap().variance;
        if v.gradient.abs() < 1e-8 && v.newton_iterations <= 50 {
            converged += 1;
        }
    }
    let r = generate_replicate(&cfg, 0).unwrap();
    let density = r.networks[0].edges.len() as f64 / (cfg.p * (cfg.p - 1) / 2) as f64;
    let start = Instant::now();
    let e1 = r.estimate(&cfg, 0, 0.2).unwrap();
    let e2 = r.estimate(&cfg, 1, 0.2).unwrap();
    let l1 = influence_from_adjacency(&AdjacencyMatrix::from_precision(&e1.precision.matrix), cfg.zeta).unwrap();
    let l2 = influence_from_adjacency(&AdjacencyMatrix::from_precision(&e2.precision.matrix), cfg.zeta).unwrap();
    let d = TwoConditionDesign::new(r.data.design.data().clone(), cfg.n1, l1, l2).unwrap();
    run_netgsa(&d, &experiment_pathways(&cfg), &netgsa_options(&cfg)).unwrap();
    let elapsed = start.elapsed();
    check(
        converged >= 95 && elapsed < Duration::from_secs(60),
        format!(
            "{converged}/100 converged; full fit at p = {}, density {:.2}%: {:.1}s",
            cfg.p,
            100.0 * density,
            elapsed.as_secs_f64()
        ),
    )
}

fn step_up(p: &[f64], level: f64) -> Vec<bool> {
    let n = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    match (1..=n).rev().find(|&k| sorted[k - 1] <= k as f64 / n as f64 * level) {
        Some(k) => p.iter().map(|&v| v <= sorted[k - 1]).collect(),
        None => vec![false; n],
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut mismatches = 0;
    for i in 0..1000 {
        let n = rng.random_range(1..=20);
        let p: Vec<f64> = if i % 4 == 0 {
            (0..n).map(|_| rng.random_range(0..20) as f64 / 200.0).collect()
        } else {
            (0..n).map(|_| rng.random::<f64>().powi(3)).collect()
        };
        let level = rng.random_range(0.01..0.3);
        let (q, reject) = benjamini_hochberg(&p, level);
        let q_reject: Vec<bool> = q.iter().map(|&v| v <= level).collect();
        if reject != step_up(&p, level) || q_reject != reject {
            mismatches += 1;
        }
    }
    let (q, reject) = benjamini_hochberg(&[0.01, 0.02, 0.04, 0.8], 0.05);
    let expected = [0.04, 0.04, 0.04 * 4.0 / 3.0, 0.8];
    let hand = reject == [true, true, false, false] && q.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12);
    check(mismatches == 0 && hand, format!("{mismatches}/1000 mismatches; hand example q = {q:.4?}, rejections {reject:?}"))
}

fn run_cli(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_netgsa")).args(args).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli_outputs(threads: &str, root: &Path, config: &str) -> Vec<(String, Vec<u8>)> {
    let out = root.join(format!("t{threads}"));
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let sim = out.join("sim");
    run_cli(&["simulate", "--config", config, "--seed", "7", "--threads", threads, "--emit-data", "--out", &s(&sim)]);
    let data = sim.join("data");
    run_cli(&[
        "estimate-network",
        "--data",
        &s(&data.join("network_samples_2.tsv")),
        "--constraints",
        &s(&data.join("constraints_2_r0.2.tsv")),
        "--seed",
        "7",
        "--threads",
        threads,
        "--out",
        &s(&out.join("est")),
    ]);
    run_cli(&[
        "netgsa",
        "--data",
        &s(&data.join("expression.tsv")),
        "--labels",
        &s(&data.join("labels.tsv")),
        "--pathways",
        &s(&data.join("pathways.gmt")),
        "--precision1",
        &s(&data.join("precision_true_1.tsv")),
        "--precision2",
        &s(&out.join("est").join("precision.tsv")),
        "--zeta",
        "1",
        "--threads",
        threads,
        "--out",
        &s(&out.join("test")),
    ]);
    tree_bytes(&out)
}

fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig::experiment1();
    let r = generate_replicate(&cfg, 0).unwrap();
    let d = &r.data.design;
    let scaled =
        TwoConditionDesign::new(d.data() * 3.0, d.n1(), d.influence(0).clone(), d.influence(1).clone()).unwrap();
    let pathways = experiment_pathways(&cfg);
    let a = run_netgsa(d, &pathways, &netgsa_options(&cfg)).unwrap();
    let b = run_netgsa(&scaled, &pathways, &netgsa_options(&cfg)).unwrap();
    let ts_worst =
        a.results.iter().zip(&b.results).map(|(x, y)| (x.statistic - y.statistic).abs()).fold(0.0, f64::max);

    let tmp = TempDir::new().unwrap();
    let small = ExperimentConfig {
        name: "determinism".into(),
        p: 24,
        subnetworks: 3,
        subnetwork_size: 8,
        mean_change_fractions: vec![0.0, 0.5, 0.5],
        structure_changed: vec![2],
        replicates: 6,
        m: 30,
        n1: 6,
        n2: 6,
        folds: 5,
        ..ExperimentConfig::experiment1()
    };
    let config = tmp.path().join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&small).unwrap()).unwrap();
    let one = cli_outputs("1", tmp.path(), config.to_str().unwrap());
    let eight = cli_outputs("8", tmp.path(), config.to_str().unwrap());
    let identical = one == eight;
    check(
        ts_worst <= 1e-8 && identical && one.len() > 10,
        format!(
            "max |ΔTS| under ×3 scaling {ts_worst:.2e}; {} output files {} at --threads 1 and 8",
            one.len(),
            if identical { "byte-identical" } else { "differ" }
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match &outcome {
            Ok(detail) => format!("criterion {n}: PASS  {detail}"),
            Err(detail) => {
                failed.push(n);
                let note = if KNOWN_FAILURES.contains(&n) { " [known]" } else { "" };
                format!("criterion {n}: FAIL{note}  {detail}")
            }
        };
        // Written past the harness's capture so the lines land in the log.
        writeln!(std::io::stdout().lock(), "{line}").unwrap();
    }
    let unexpected: Vec<usize> = failed.iter().copied().filter(|n| !KNOWN_FAILURES.contains(n)).collect();
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
