mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rotigcv::aligned::estimate_alpha;
use rotigcv::ensembles::{generate_design, generate_design_with, make_signal, EnsembleSpec, Family, SignalSpec};
use rotigcv::harness::{
    oracle_risk, oracle_risk_mc, parse_csv, run_experiment, write_results, OutputFormat, TestModel, TestSampler,
    CSV_HEADER,
};
use rotigcv::rng::stream_rng;
use rotigcv::roti_gcv::default_estimation_grid;
use rotigcv::{estimate_snr, ridge_fit, svd_decompose, RidgePath, RotiGcv};

use common::{config, mean};

fn csv_bytes(name: &str) -> Vec<u8> {
    let out = run_experiment(&config(name)).unwrap();
    assert!(out.failures.is_empty());
    let mut buf = Vec::new();
    write_results(&out.rows, OutputFormat::Csv, &mut buf).unwrap();
    buf
}

#[test]
fn smoke_config_is_fast_and_complete() {
    let cfg = config("smoke");
    let start = Instant::now();
    let out = run_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "{elapsed:?}");
    assert!(out.failures.is_empty());
    let points = cfg.lambda_sweep.resolve().unwrap().len();
    // roti, aroti, gcv, loocv, kfold plus three noise-adjusted copies
    assert_eq!(out.rows.len(), 8 * points);
    for method in ["roti_gcv", "aroti_gcv", "gcv", "gcv_adj", "loocv", "loocv_adj", "kfold(5)", "kfold(5)_adj"] {
        let curves = out.curves(method);
        assert_eq!(curves.len(), 1, "{method}");
        assert_eq!(curves[0].iter().filter(|r| r.tuned).count(), 1, "{method}");
    }
    assert!(out.rows.iter().all(|r| r.exact_risk >= 0.0 && r.metric_value.is_finite()));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let a = csv_bytes("smoke");
    let b = csv_bytes("smoke");
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| csv_bytes("smoke"));
    assert_eq!(a, c);
}

#[test]
fn csv_round_trips() {
    let out = run_experiment(&config("smoke")).unwrap();
    let mut buf = Vec::new();
    write_results(&out.rows, OutputFormat::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(parse_csv(&text).unwrap(), out.rows);
}

#[test]
fn noise_resamples_keep_design_and_signal() {
    let mut cfg = config("smoke");
    cfg.n_noise_resamples = 3;
    cfg.methods = vec!["roti_gcv".parse().unwrap()];
    let out = run_experiment(&cfg).unwrap();
    let curves = out.curves("roti_gcv");
    assert_eq!(curves.len(), 3);
    // Same λ grid and distinct noise draws give distinct estimates.
    assert!(curves[0][0].r2_hat != curves[1][0].r2_hat);
    let single = {
        let mut c = cfg.clone();
        c.n_noise_resamples = 1;
        run_experiment(&c).unwrap()
    };
    assert_eq!(single.curves("roti_gcv")[0], curves[0]);
}

fn gaussian_snr(seed: u64, r2: f64, sigma2: f64) -> (f64, f64) {
    let ens = EnsembleSpec::new(Family::GaussianIid, 1000, 1000, seed);
    let x = generate_design(&ens).unwrap();
    let spec = svd_decompose(x.view()).unwrap();
    let beta = make_signal(&SignalSpec::isotropic(r2, seed), &spec).unwrap();
    let noise = common::gaussian_vec(1000, seed) * sigma2.sqrt();
    let y = x.dot(&beta) + noise;
    let est = estimate_snr(&spec, y.view(), &default_estimation_grid(&spec).unwrap()).unwrap();
    (est.r2_hat, est.sigma2_hat)
}

#[test]
fn noiseless_planted_signal() {
    for seed in 0..10 {
        let (r2, s2) = gaussian_snr(seed, 1.0, 0.0);
        assert!((0.9..=1.1).contains(&r2), "seed {seed}: r2_hat {r2}");
        assert!((-0.05..=0.05).contains(&s2), "seed {seed}: sigma2_hat {s2}");
    }
}

/// Exact sd of r̂² under pure Gaussian noise: r̂² = Σ_i c_i t_i is linear in the
/// training errors, and t_i = (1/n) Σ_k w_ik z_k² with independent χ²₁ terms.
fn pure_noise_sd(spec: &rotigcv::SpectralDecomposition, grid: &[f64]) -> f64 {
    use rotigcv::roti_gcv::{estimating_coefficients, solve_snr, EstimatingGridPoint};
    let base: Vec<EstimatingGridPoint> = grid
        .iter()
        .map(|&lambda| {
            let (a, b) = estimating_coefficients(spec, lambda).unwrap();
            EstimatingGridPoint { lambda, a, b, t: 0.0 }
        })
        .collect();
    let c: Vec<f64> = (0..grid.len())
        .map(|j| {
            let mut pts = base.clone();
            pts[j].t = 1.0;
            solve_snr(&pts, Default::default()).unwrap().0
        })
        .collect();
    let n = spec.n() as f64;
    let var: f64 = spec
        .eigenvalues()
        .map(|d| {
            let w: f64 = grid.iter().zip(&c).map(|(&l, &ci)| ci * l * l / ((d + l) * (d + l))).sum();
            w * w
        })
        .sum::<f64>();
    (2.0 * var).sqrt() / n
}

#[test]
fn pure_noise() {
    let mut r2s = Vec::new();
    let mut sd = 0.0;
    for seed in 0..10 {
        let ens = EnsembleSpec::new(Family::GaussianIid, 1000, 1000, seed);
        let spec = svd_decompose(generate_design(&ens).unwrap().view()).unwrap();
        let grid = default_estimation_grid(&spec).unwrap();
        sd = pure_noise_sd(&spec, &grid);
        let y = common::gaussian_vec(1000, seed);
        let est = estimate_snr(&spec, y.view(), &grid).unwrap();
        assert!(est.r2_hat.abs() <= 4.0 * sd, "seed {seed}: r2_hat {} vs sd {sd}", est.r2_hat);
        assert!((est.r2_hat + est.sigma2_hat - y.dot(&y) / 1000.0).abs() <= 0.1);
        r2s.push(est.r2_hat);
    }
    let m = mean(&r2s);
    let var = r2s.iter().map(|r| r * r).sum::<f64>() / r2s.len() as f64;
    assert!(m.abs() <= 3.0 * sd / (r2s.len() as f64).sqrt(), "mean {m}");
    assert!((0.2..=3.0).contains(&(var / (sd * sd))), "variance ratio {}", var / (sd * sd));
}

#[test]
fn noiseless_metric_prefers_least_shrinkage() {
    let ens = EnsembleSpec::new(Family::GaussianIid, 300, 150, 4);
    let x = generate_design(&ens).unwrap();
    let spec = svd_decompose(x.view()).unwrap();
    let beta = make_signal(&SignalSpec::isotropic(1.0, 4), &spec).unwrap();
    let y = x.dot(&beta);
    let path = RidgePath::new(&spec, y.view()).unwrap();
    let roti = RotiGcv::fit(&path, &default_estimation_grid(&spec).unwrap(), Default::default()).unwrap();
    let grid = rotigcv::roti_gcv::log_grid(0.01, 10.0, 15).unwrap();
    let (best, _) = rotigcv::tune_lambda(|l| roti.metric(l), &grid).unwrap();
    assert_eq!(best, grid[0]);
}

#[test]
fn planted_direction_alpha_exact() {
    let ens = EnsembleSpec::new(Family::AutocorrelatedRows { rho: 0.5 }, 60, 40, 2);
    let x = generate_design(&ens).unwrap();
    let spec = svd_decompose(x.view()).unwrap();
    let alpha = 0.7;
    let beta = spec.right_frame().row(2).mapv(|v| v * alpha * 60f64.sqrt());
    let y = x.dot(&beta);
    let est = estimate_alpha(&spec, y.view(), &[2]).unwrap();
    assert!((est.scaled[&2] - alpha).abs() < 1e-10);
}

#[test]
fn autocorrelated_rows_have_lag_one_correlation() {
    let (n, p, rho) = (400, 200, 0.8);
    let x = generate_design(&EnsembleSpec::new(Family::AutocorrelatedRows { rho }, n, p, 1)).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..n {
        num += x.row(i).dot(&x.row(i - 1));
        den += x.row(i - 1).dot(&x.row(i - 1));
    }
    assert!((num / den - rho).abs() < 0.02, "{}", num / den);
}

#[test]
fn equicorrelated_columns_have_target_correlation() {
    // Off-diagonal correlation between entries of the same column.
    let (n, p, rho) = (200, 400, 0.8);
    let x = generate_design(&EnsembleSpec::new(Family::EquicorrelatedColumns { rho }, n, p, 3)).unwrap();
    let mut corr = Vec::new();
    for i in 0..20 {
        let (a, b) = (x.row(2 * i), x.row(2 * i + 1));
        corr.push(a.dot(&b) / (a.dot(&a) * b.dot(&b)).sqrt());
    }
    let c = mean(&corr);
    assert!((c - rho).abs() <= 0.05, "{c}");
}

#[test]
fn invariant_families_have_rotation_free_moments() {
    // For right-rotationally invariant X, ‖X u‖² has the same law for every unit u.
    // Compare a coordinate axis with the all-ones direction.
    let (n, p, draws) = (60, 60, 400);
    let e1 = {
        let mut v = ndarray::Array1::zeros(p);
        v[0] = 1.0;
        v
    };
    let ones = ndarray::Array1::from_elem(p, 1.0 / (p as f64).sqrt());
    let families = [
        Family::GaussianIid,
        Family::AutocorrelatedRows { rho: 0.9 },
        Family::EquicorrelatedColumns { rho: 0.8 },
        Family::MultivariateTRows { nu: 5.0 },
        Family::ProductOfGaussians { inner: vec![60] },
        Family::Spiked { rank: 2, strength: 3.0 },
    ];
    for family in families {
        let ens = EnsembleSpec::new(family.clone(), n, p, 0);
        let mut rng = stream_rng(11, 0);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..draws {
            let x = generate_design_with(&ens, &mut rng).unwrap();
            let (u, v) = (x.dot(&e1), x.dot(&ones));
            a.push(u.dot(&u));
            b.push(v.dot(&v));
        }
        let (ma, mb) = (mean(&a), mean(&b));
        let var = |s: &[f64], m: f64| s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (s.len() - 1) as f64;
        let se = ((var(&a, ma) + var(&b, mb)) / draws as f64).sqrt();
        assert!((ma - mb).abs() <= 5.0 * se, "{}: {ma} vs {mb} (se {se})", family.name());
    }
    // The mixture is the deliberate counterexample: the mean direction carries extra energy.
    let ens = EnsembleSpec::new(Family::GaussianMixtureRows { mu: 3.0 }, n, p, 0);
    let x = generate_design(&ens).unwrap();
    let (u, v) = (x.dot(&e1), x.dot(&ones));
    assert!(v.dot(&v) > 5.0 * u.dot(&u));
}

#[test]
fn oracle_matches_monte_carlo_for_stress_families() {
    let (n, p) = (150, 150);
    for (k, family) in [Family::GaussianMixtureRows { mu: 3.0 }, Family::RowEquicorrelated { rho: 0.5 }].into_iter().enumerate() {
        let ens = EnsembleSpec::new(family, n, p, 30 + k as u64);
        let x = generate_design(&ens).unwrap();
        let spec = svd_decompose(x.view()).unwrap();
        let beta = make_signal(&SignalSpec::isotropic(1.0, ens.seed), &spec).unwrap();
        let y = x.dot(&beta) + common::gaussian_vec(n, ens.seed);
        let b = ridge_fit(&spec, y.view(), 0.5).unwrap().beta_hat;
        let exact = oracle_risk(b.view(), beta.view(), &TestModel::population(&ens).unwrap()).unwrap();
        let (mc, se) = oracle_risk_mc(b.view(), beta.view(), &TestSampler::Independent(ens.with_seed(99)), 200, 1).unwrap();
        assert!((exact - mc).abs() <= 4.0 * se, "{exact} vs {mc} ± {se}");
    }
}

#[test]
fn coupled_oracle_matches_monte_carlo() {
    let (n, p) = (120, 80);
    let ens = EnsembleSpec::new(Family::AutocorrelatedRows { rho: 0.7 }, n, p, 5);
    let x = generate_design(&ens).unwrap();
    let spec = svd_decompose(x.view()).unwrap();
    let coupled = vec![0, 1, 2];
    let test_sv: Vec<f64> = rotigcv::svd_decompose(generate_design(&ens.with_seed(6)).unwrap().view())
        .unwrap()
        .singular_values()
        .to_vec();
    let eigs: Vec<f64> = test_sv.iter().map(|s| s * s).collect();
    let spikes = rotigcv::aligned::estimate_spikes(&eigs, &coupled, p, 1.0).unwrap();
    let dirs: Vec<_> = coupled.iter().map(|&i| spec.right_frame().row(i).to_owned()).collect();
    let model = TestModel::coupled(&dirs, &coupled, &spikes, n).unwrap();
    let fixed = Array2::from_shape_fn((3, p), |(r, c)| spec.right_frame()[[coupled[r], c]]);
    let sampler = TestSampler::Coupled { singular_values: test_sv, coupled: coupled.clone(), fixed, n_prime: n };
    let beta = make_signal(&SignalSpec::isotropic(1.0, 5), &spec).unwrap();
    let y = x.dot(&beta) + common::gaussian_vec(n, 5);
    let b = ridge_fit(&spec, y.view(), 0.3).unwrap().beta_hat;
    let exact = oracle_risk(b.view(), beta.view(), &model).unwrap();
    let (mc, se) = oracle_risk_mc(b.view(), beta.view(), &sampler, 300, 2).unwrap();
    assert!((exact - mc).abs() <= 4.0 * se, "{exact} vs {mc} ± {se}");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rotigcv"))
}

#[test]
fn cli_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke.csv");
    let cfg = format!("{}/../../configs/smoke.toml", env!("CARGO_MANIFEST_DIR"));
    let status = cli().args(["run", &cfg, "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.as_bytes(), csv_bytes("smoke").as_slice());
}

#[test]
fn cli_reports_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sigma2 = 1.0\nmethods = []\n").unwrap();
    let out = cli().args(["run"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(record["error"], "config");
}
