//! Signal and noise estimation from training errors along a penalty grid, the
//! asymptotic ridge risk functional, and the resulting ROTI-GCV metric.
//!
//! For every penalty `λ_i` the normalized training error satisfies, to leading
//! order under right-rotational invariance,
//!
//! ```text
//! t_i = (1/n) ‖y − X β̂_{λ_i}‖² ≈ r² a_i + σ² b_i,
//! a_i = λ_i² (1/p) Σ s²/(s²+λ_i)²,   b_i = λ_i² v'(−λ_i).
//! ```
//!
//! Treating these as estimating equations over a grid gives `(r̂², σ̂²)`, which are
//! plugged into the risk functional
//! `R(r², σ²; λ) = r² λ² m'(−λ) + σ² (1/n) Σ s²/(s²+λ)²`.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::ridge::RidgePath;
use crate::spectra::{eval_transforms, SpectralDecomposition};

/// Relative spread of `a_i / b_i` below which the grid cannot separate `r²` from `σ²`.
pub const IDENTIFIABILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatingGridPoint {
    pub lambda: f64,
    /// Coefficient of `r²`.
    pub a: f64,
    /// Coefficient of `σ²`.
    pub b: f64,
    /// Normalized training error `(1/n) ‖y − X β̂‖²`.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    /// Estimated `‖β‖²/n`. May be slightly negative; see [`SnrEstimate::clamped`].
    pub r2_hat: f64,
    pub sigma2_hat: f64,
    pub grid: Vec<EstimatingGridPoint>,
    /// Relative spread `(max − min) / max` of `a_i / b_i`.
    pub condition_diag: f64,
    /// `max_i |t_i − r̂² a_i − σ̂² b_i|`.
    pub residual_diag: f64,
}

impl SnrEstimate {
    /// `(max(r̂², 0), max(σ̂², 0))`, the values fed to the risk functional.
    pub fn clamped(&self) -> (f64, f64) {
        (self.r2_hat.max(0.0), self.sigma2_hat.max(0.0))
    }

    pub fn has_negative(&self) -> bool {
        self.r2_hat < 0.0 || self.sigma2_hat < 0.0
    }
}

/// How the grid of estimating equations is reduced to `(r̂², σ̂²)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrRegression {
    /// Differences against the first grid point (regression through that point).
    #[default]
    FirstPoint,
    /// Ordinary least squares with an intercept (mean-centered).
    Centered,
}

/// `(a, b)` at one penalty.
pub fn estimating_coefficients(spec: &SpectralDecomposition, lambda: f64) -> Result<(f64, f64)> {
    require_positive(lambda)?;
    let l2 = lambda * lambda;
    let (mut sa, mut sb) = (0.0, 0.0);
    for d in spec.eigenvalues() {
        let den = (d + lambda) * (d + lambda);
        sa += d / den;
        sb += l2 / den;
    }
    let pad = spec.n().saturating_sub(spec.p()) as f64;
    Ok((l2 * sa / spec.p() as f64, (sb + pad) / spec.n() as f64))
}

/// `points` values log-spaced from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && min.is_finite() && max.is_finite()) {
        return Err(Error::invalid(format!("log grid needs 0 < min <= max, got [{min}, {max}]")));
    }
    match points {
        0 => Err(Error::invalid("log grid needs at least one point")),
        1 => Ok(vec![min]),
        _ => {
            let (lo, hi) = (min.ln(), max.ln());
            let step = (hi - lo) / (points - 1) as f64;
            Ok((0..points)
                .map(|i| match i {
                    0 => min,
                    _ if i + 1 == points => max,
                    _ => (lo + step * i as f64).exp(),
                })
                .collect())
        }
    }
}

/// 20 log-spaced penalties over `[1e-2, 1e2]` times the mean eigenvalue of `X^T X`.
pub fn default_estimation_grid(spec: &SpectralDecomposition) -> Result<Vec<f64>> {
    let scale = spec.mean_eigenvalue();
    if !(scale > 0.0) {
        return Err(Error::Degenerate("design has an identically zero spectrum".into()));
    }
    log_grid(1e-2 * scale, 1e2 * scale, 20)
}

/// Solves the grid of estimating equations for `(r̂², σ̂²)`.
pub fn solve_snr(points: &[EstimatingGridPoint], regression: SnrRegression) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two grid points, got {}",
            points.len()
        )));
    }
    let spread = ratio_spread(points);
    if !(spread >= IDENTIFIABILITY_TOL) {
        return Err(Error::Identifiability { spread });
    }
    // t/a = r² + σ² (b/a) and t/b = σ² + r² (a/b): one slope from each.
    let sigma2 = slope(points.iter().map(|g| (g.b / g.a, g.t / g.a)), regression);
    let r2 = slope(points.iter().map(|g| (g.a / g.b, g.t / g.b)), regression);
    Ok((r2, sigma2))
}

fn ratio_spread(points: &[EstimatingGridPoint]) -> f64 {
    let (lo, hi) = points.iter().map(|g| g.a / g.b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r), hi.max(r))
    });
    let scale = lo.abs().max(hi.abs());
    if scale == 0.0 || !scale.is_finite() {
        0.0
    } else {
        (hi - lo) / scale
    }
}

fn slope(pairs: impl Iterator<Item = (f64, f64)> + Clone, regression: SnrRegression) -> f64 {
    let (x0, y0) = match regression {
        SnrRegression::FirstPoint => pairs.clone().next().expect("nonempty grid"),
        SnrRegression::Centered => {
            let (mut sx, mut sy, mut k) = (0.0, 0.0, 0.0);
            for (x, y) in pairs.clone() {
                sx += x;
                sy += y;
                k += 1.0;
            }
            (sx / k, sy / k)
        }
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in pairs {
        num += (y - y0) * (x - x0);
        den += (x - x0) * (x - x0);
    }
    num / den
}

pub fn estimate_snr(
    spec: &SpectralDecomposition,
    y: ArrayView1<'_, f64>,
    lambda_grid: &[f64],
) -> Result<SnrEstimate> {
    estimate_snr_on_path(&RidgePath::new(spec, y)?, lambda_grid, SnrRegression::FirstPoint)
}

pub fn estimate_snr_on_path(
    path: &RidgePath<'_>,
    lambda_grid: &[f64],
    regression: SnrRegression,
) -> Result<SnrEstimate> {
    if lambda_grid.len() < 2 {
        return Err(Error::invalid(format!(
            "estimation grid needs at least two penalties, got {}",
            lambda_grid.len()
        )));
    }
    let spec = path.spec();
    let grid = lambda_grid
        .iter()
        .map(|&lambda| {
            let (a, b) = estimating_coefficients(spec, lambda)?;
            Ok(EstimatingGridPoint { lambda, a, b, t: path.training_error(lambda)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let condition_diag = ratio_spread(&grid);
    let (r2_hat, sigma2_hat) = solve_snr(&grid, regression)?;
    let residual_diag = grid
        .iter()
        .map(|g| (g.t - r2_hat * g.a - sigma2_hat * g.b).abs())
        .fold(0.0, f64::max);
    Ok(SnrEstimate { r2_hat, sigma2_hat, grid, condition_diag, residual_diag })
}

/// Asymptotic out-of-sample risk `r² λ² m'(−λ) + σ² (1/n) Σ s²/(s²+λ)²`.
pub fn risk_functional(spec: &SpectralDecomposition, r2: f64, sigma2: f64, lambda: f64) -> Result<f64> {
    require_positive(lambda)?;
    let t = eval_transforms(spec, lambda)?;
    let variance: f64 = spec.eigenvalues().map(|d| d / ((d + lambda) * (d + lambda))).sum::<f64>()
        / spec.n() as f64;
    Ok(r2 * lambda * lambda * t.m_prime + sigma2 * variance)
}

/// The same functional written through the companion transform:
/// `r² (λ²/γ v' + (γ−1)/γ) + σ² (v − λ v')`.
pub fn risk_functional_companion(
    spec: &SpectralDecomposition,
    r2: f64,
    sigma2: f64,
    lambda: f64,
) -> Result<f64> {
    let t = eval_transforms(spec, lambda)?;
    let g = spec.gamma();
    Ok(r2 * (lambda * lambda / g * t.v_prime + (g - 1.0) / g) + sigma2 * (t.v - lambda * t.v_prime))
}

/// ROTI-GCV fitted on one dataset: the SNR estimate is computed once and the
/// metric is then cheap to evaluate at any penalty.
#[derive(Debug, Clone)]
pub struct RotiGcv<'a> {
    spec: &'a SpectralDecomposition,
    estimate: SnrEstimate,
}

impl<'a> RotiGcv<'a> {
    pub fn fit(path: &RidgePath<'a>, estimation_grid: &[f64], regression: SnrRegression) -> Result<Self> {
        let estimate = estimate_snr_on_path(path, estimation_grid, regression)?;
        Ok(Self { spec: path.spec(), estimate })
    }

    pub fn estimate(&self) -> &SnrEstimate {
        &self.estimate
    }

    pub fn metric(&self, lambda: f64) -> Result<f64> {
        let (r2, sigma2) = self.estimate.clamped();
        risk_functional(self.spec, r2, sigma2, lambda)
    }
}

pub fn roti_gcv_metric(
    spec: &SpectralDecomposition,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    estimation_grid: &[f64],
) -> Result<f64> {
    let path = RidgePath::new(spec, y)?;
    RotiGcv::fit(&path, estimation_grid, SnrRegression::FirstPoint)?.metric(lambda)
}

/// Minimizes `metric` over a sorted grid; exact ties go to the larger penalty.
pub fn tune_lambda<F>(mut metric: F, search_grid: &[f64]) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if search_grid.is_empty() {
        return Err(Error::invalid("search grid is empty"));
    }
    if search_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("search grid must be sorted ascending"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &lambda in search_grid {
        require_positive(lambda)?;
        let value = metric(lambda).map_err(|e| Error::MetricAt { lambda, source: Box::new(e) })?;
        if best.is_none_or(|(_, v)| value <= v) {
            best = Some((lambda, value));
        }
    }
    Ok(best.expect("nonempty grid"))
}
