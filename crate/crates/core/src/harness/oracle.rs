use ndarray::{Array1, Array2, ArrayView1};

use crate::aligned::SpikeLevels;
use crate::ensembles::{coupled_frame, generate_design_with, EnsembleSpec, Family};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

/// Second moment `E[x̃ x̃^T]` of one test row, so that the risk of an error
/// `δ = β̂ − β` is `δ^T E[x̃ x̃^T] δ`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestModel {
    Isotropic { scale: f64 },
    /// `base · I + Σ weight · u u^T` with unit `u`.
    LowRank { base: f64, directions: Vec<(Array1<f64>, f64)> },
}

impl TestModel {
    /// Population second moment of a generated ensemble, when it has a closed form.
    pub fn population(ens: &EnsembleSpec) -> Result<Self> {
        let n = ens.n as f64;
        let p = ens.p;
        Ok(match &ens.family {
            Family::GaussianMixtureRows { mu } => {
                let c = 1.0 / (n * (1.0 + mu * mu));
                TestModel::LowRank {
                    base: c,
                    directions: vec![(Array1::from_elem(p, 1.0 / (p as f64).sqrt()), c * mu * mu * p as f64)],
                }
            }
            Family::RowEquicorrelated { rho } => TestModel::LowRank {
                base: (1.0 - rho) / n,
                directions: vec![(Array1::from_elem(p, 1.0 / (p as f64).sqrt()), rho * p as f64 / n)],
            },
            _ => TestModel::Isotropic { scale: 1.0 / n },
        })
    }

    /// Coupled test rows: spikes along the given unit directions, bulk elsewhere.
    /// `spikes` hold eigenvalues of `X̃^T X̃` for a test set with `n_prime` rows.
    pub fn coupled(directions: &[Array1<f64>], coupled: &[usize], spikes: &SpikeLevels, n_prime: usize) -> Result<Self> {
        if directions.len() != coupled.len() {
            return Err(Error::DimensionMismatch("one direction per coupled index".into()));
        }
        let np = n_prime as f64;
        let directions = coupled
            .iter()
            .zip(directions)
            .map(|(i, u)| {
                let level = spikes
                    .levels
                    .get(i)
                    .ok_or_else(|| Error::Config(format!("missing spike level for coupled index {i}")))?;
                Ok((u.clone(), (level - spikes.bulk) / np))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TestModel::LowRank { base: spikes.bulk / np, directions })
    }

    pub fn quadratic(&self, delta: ArrayView1<'_, f64>) -> f64 {
        let sq = delta.dot(&delta);
        match self {
            TestModel::Isotropic { scale } => scale * sq,
            TestModel::LowRank { base, directions } => {
                base * sq
                    + directions
                        .iter()
                        .map(|(u, w)| {
                            let c = u.dot(&delta);
                            w * c * c
                        })
                        .sum::<f64>()
            }
        }
    }
}

/// Exact conditional risk `E_x̃[(x̃^T (β̂ − β))²]`.
pub fn oracle_risk(beta_hat: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, model: &TestModel) -> Result<f64> {
    if beta_hat.len() != beta.len() {
        return Err(Error::DimensionMismatch(format!("β̂ has {} entries, β has {}", beta_hat.len(), beta.len())));
    }
    let delta = &beta_hat - &beta;
    Ok(model.quadratic(delta.view()).max(0.0))
}

/// How fresh test designs are drawn for the Monte-Carlo oracle.
#[derive(Debug, Clone)]
pub enum TestSampler {
    Independent(EnsembleSpec),
    /// Fixed test singular values; right frame Haar except rows at `coupled`,
    /// which are pinned to `fixed` (one row per index).
    Coupled { singular_values: Vec<f64>, coupled: Vec<usize>, fixed: Array2<f64>, n_prime: usize },
}

impl TestSampler {
    fn squared_norm(&self, delta: &Array1<f64>, rng: &mut rand_chacha::ChaCha20Rng) -> Result<(f64, usize)> {
        match self {
            TestSampler::Independent(ens) => {
                let x = generate_design_with(ens, rng)?;
                let v = x.dot(delta);
                Ok((v.dot(&v), ens.n))
            }
            TestSampler::Coupled { singular_values, coupled, fixed, n_prime } => {
                let frame = coupled_frame(fixed.view(), rng);
                let p = frame.nrows();
                let mut free = coupled.len()..p;
                let mut total = 0.0;
                for (pos, &s) in singular_values.iter().enumerate() {
                    let row = match coupled.iter().position(|&c| c == pos) {
                        Some(t) => t,
                        None => free.next().expect("frame has p rows"),
                    };
                    let c = frame.row(row).dot(delta);
                    total += s * s * c * c;
                }
                Ok((total, *n_prime))
            }
        }
    }
}

/// Mean and standard error of `(1/n') ‖X̃ (β̂ − β)‖²` over `draws` test designs.
pub fn oracle_risk_mc(
    beta_hat: ArrayView1<'_, f64>,
    beta: ArrayView1<'_, f64>,
    sampler: &TestSampler,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::invalid(format!("need at least 2 draws, got {draws}")));
    }
    let delta = &beta_hat - &beta;
    let mut rng = stream_rng(seed, streams::ORACLE_MC);
    let values = (0..draws)
        .map(|_| sampler.squared_norm(&delta, &mut rng).map(|(s, rows)| s / rows as f64))
        .collect::<Result<Vec<f64>>>()?;
    let m = draws as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    #[test]
    fn perfect_recovery_is_zero() {
        let b = Array1::from(vec![1.0, -2.0, 0.5]);
        let m = TestModel::Isotropic { scale: 1.0 / 3.0 };
        assert_eq!(oracle_risk(b.view(), b.view(), &m).unwrap(), 0.0);
        let ens = EnsembleSpec::new(Family::GaussianIid, 5, 3, 0);
        let (mean, se) = oracle_risk_mc(b.view(), b.view(), &TestSampler::Independent(ens), 5, 1).unwrap();
        assert_eq!((mean, se), (0.0, 0.0));
    }

    #[test]
    fn unit_normalized_error() {
        let n = 4;
        let m = TestModel::Isotropic { scale: 1.0 / n as f64 };
        let delta = Array1::from(vec![1.0, 1.0, 1.0, 1.0]);
        let zero = Array1::zeros(4);
        assert_abs_diff_eq!(oracle_risk(delta.view(), zero.view(), &m).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn coupled_quadratic_by_hand() {
        let n_prime = 5;
        let o1 = Array1::from(vec![0.6, 0.8, 0.0]);
        let spikes = SpikeLevels { levels: BTreeMap::from([(0, 3.0)]), bulk: 1.0 };
        let m = TestModel::coupled(&[o1.clone()], &[0], &spikes, n_prime).unwrap();
        let delta = o1.mapv(|v| v * (n_prime as f64).sqrt());
        let zero = Array1::zeros(3);
        assert_abs_diff_eq!(oracle_risk(delta.view(), zero.view(), &m).unwrap(), 3.0, epsilon = 1e-12);
        let missing = SpikeLevels { levels: BTreeMap::new(), bulk: 1.0 };
        assert!(matches!(TestModel::coupled(&[o1], &[0], &missing, 5), Err(Error::Config(_))));
    }
}
