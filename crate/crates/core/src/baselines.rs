//! Classical comparison metrics: GCV, the leave-one-out shortcut, k-fold CV, and
//! the large-sample limit of GCV.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::ridge::{hat_diagonal, RidgePath};
use crate::rng::{stream_rng, streams};
use crate::spectra::{eval_transforms, svd_decompose, trace_smoother, SpectralDecomposition};

/// Leverages at or above `1 − LEVERAGE_TOL` make the leave-one-out shortcut unusable.
pub const LEVERAGE_TOL: f64 = 1e-12;

pub fn gcv_metric(spec: &SpectralDecomposition, y: ArrayView1<'_, f64>, lambda: f64) -> Result<f64> {
    gcv_on_path(&RidgePath::new(spec, y)?, lambda)
}

/// `(1/n) ‖y − X β̂‖² / (1 − Tr(S_λ)/n)²`.
pub fn gcv_on_path(path: &RidgePath<'_>, lambda: f64) -> Result<f64> {
    require_positive(lambda)?;
    let spec = path.spec();
    let n = spec.n();
    let trace = trace_smoother(spec, lambda)?;
    let denom = 1.0 - trace / n as f64;
    if !(denom > 0.0) {
        return Err(Error::Divergence { lambda, trace, n });
    }
    Ok(path.training_error(lambda)? / (denom * denom))
}

/// Which closed form to use for the almost-sure limit of GCV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcvLimitForm {
    /// `[r²(v − λv') + σ² γ v'] / (γ v²)`.
    #[default]
    Compact,
    /// Limit of the training error, `r² λ²/γ (v − λv') + σ² λ² v'`, over the exact
    /// denominator `(1 − Tr(S)/n)² = (λ v)²`.
    ExplicitSums,
}

pub fn gcv_asymptotic(spec: &SpectralDecomposition, r2: f64, sigma2: f64, lambda: f64) -> Result<f64> {
    gcv_asymptotic_with(spec, r2, sigma2, lambda, GcvLimitForm::Compact)
}

pub fn gcv_asymptotic_with(
    spec: &SpectralDecomposition,
    r2: f64,
    sigma2: f64,
    lambda: f64,
    form: GcvLimitForm,
) -> Result<f64> {
    let t = eval_transforms(spec, lambda)?;
    let g = spec.gamma();
    let bias_part = t.v - lambda * t.v_prime;
    Ok(match form {
        GcvLimitForm::Compact => (r2 * bias_part + sigma2 * g * t.v_prime) / (g * t.v * t.v),
        GcvLimitForm::ExplicitSums => {
            let l2 = lambda * lambda;
            let numerator = r2 * l2 / g * bias_part + sigma2 * l2 * t.v_prime;
            numerator / (l2 * t.v * t.v)
        }
    })
}

pub fn loocv_metric(spec: &SpectralDecomposition, y: ArrayView1<'_, f64>, lambda: f64) -> Result<f64> {
    loocv_on_path(&RidgePath::new(spec, y)?, y, lambda)
}

/// `(1/n) Σ_i ((y_i − ŷ_i) / (1 − (S_λ)_ii))²`.
pub fn loocv_on_path(path: &RidgePath<'_>, y: ArrayView1<'_, f64>, lambda: f64) -> Result<f64> {
    let spec = path.spec();
    let leverage = hat_diagonal(spec, lambda)?;
    let fitted = path.fitted(lambda)?;
    let mut total = 0.0;
    for (i, ((&yi, &fi), &h)) in y.iter().zip(fitted.iter()).zip(leverage.iter()).enumerate() {
        if h >= 1.0 - LEVERAGE_TOL {
            return Err(Error::DegenerateLeverage { index: i, leverage: h });
        }
        let r = (yi - fi) / (1.0 - h);
        total += r * r;
    }
    Ok(total / spec.n() as f64)
}

/// A fixed random k-fold partition of a design with the decomposition of every
/// training split cached, so a whole penalty sweep costs k SVDs.
#[derive(Debug, Clone)]
pub struct KFold {
    folds: Vec<Fold>,
    n: usize,
}

#[derive(Debug, Clone)]
struct Fold {
    train: Vec<usize>,
    validation: Vec<usize>,
    spec: SpectralDecomposition,
    x_validation: Array2<f64>,
}

impl KFold {
    /// Uniformly random partition of the rows into `k` folds of near-equal size.
    pub fn new(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if k < 2 || k > n {
            return Err(Error::invalid(format!("k-fold needs 2 <= k <= n = {n}, got k = {k}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(seed, streams::FOLDS));
        let folds = (0..k)
            .map(|f| {
                let mut validation: Vec<usize> = order.iter().skip(f).step_by(k).copied().collect();
                validation.sort_unstable();
                let mut train: Vec<usize> = (0..n).filter(|i| validation.binary_search(i).is_err()).collect();
                train.sort_unstable();
                let spec = svd_decompose(x.select(Axis(0), &train).view())?;
                let x_validation = x.select(Axis(0), &validation);
                Ok(Fold { train, validation, spec, x_validation })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { folds, n })
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Validation row indices of every fold.
    pub fn partition(&self) -> Vec<&[usize]> {
        self.folds.iter().map(|f| f.validation.as_slice()).collect()
    }

    /// Mean over folds of the validation mean squared error, one value per penalty.
    pub fn curve(&self, y: ArrayView1<'_, f64>, lambdas: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch(format!("response length {} vs {} rows", y.len(), self.n)));
        }
        let mut totals = vec![0.0; lambdas.len()];
        for fold in &self.folds {
            let y_train = y.select(Axis(0), &fold.train);
            let y_val = y.select(Axis(0), &fold.validation);
            let path = RidgePath::new(&fold.spec, y_train.view())?;
            for (acc, &lambda) in totals.iter_mut().zip(lambdas) {
                require_positive(lambda)?;
                let beta = path.coefficients(lambda)?;
                let resid: Array1<f64> = &y_val - &fold.x_validation.dot(&beta);
                *acc += resid.dot(&resid) / y_val.len() as f64;
            }
        }
        Ok(totals.into_iter().map(|t| t / self.folds.len() as f64).collect())
    }
}

pub fn kfold_metric(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    k: usize,
    seed: u64,
) -> Result<f64> {
    require_positive(lambda)?;
    Ok(KFold::new(x, k, seed)?.curve(y, &[lambda])?[0])
}
