#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rotigcv::harness::{ExperimentConfig, ResultRow, RunOutput};
use rotigcv::rng::stream_rng;

pub fn config(name: &str) -> ExperimentConfig {
    let path = format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    ExperimentConfig::from_path(std::path::Path::new(&path)).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, 99);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn gaussian_vec(len: usize, seed: u64) -> Array1<f64> {
    let mut rng = stream_rng(seed, 98);
    Array1::from_shape_simple_fn(len, || rng.sample(StandardNormal))
}

/// `max_λ |metric − exact| / exact` for one curve.
pub fn sup_rel(curve: &[&ResultRow]) -> f64 {
    curve.iter().map(|r| (r.metric_value - r.exact_risk).abs() / r.exact_risk).fold(0.0, f64::max)
}

/// Per-resample sup-relative errors of one method.
pub fn sup_errors(out: &RunOutput, method: &str) -> Vec<f64> {
    out.curves(method).iter().map(|c| sup_rel(c)).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn tuned_index(curve: &[&ResultRow]) -> usize {
    curve.iter().position(|r| r.tuned).expect("one tuned row per curve")
}

pub fn oracle_index(curve: &[&ResultRow]) -> usize {
    (0..curve.len()).min_by(|&a, &b| curve[a].exact_risk.total_cmp(&curve[b].exact_risk)).unwrap()
}

pub fn report(name: &str, pass: bool, detail: &str) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
