//! Risk estimation when the signal aligns with leading right singular vectors
//! (aligned set `J_a`) and some of those vectors are shared with the test design
//! (coupled set `J_c`).
//!
//! Indices are 0-based positions in the nonincreasing singular-value order of the
//! training design. The signal model is `β = β' + Σ_{i∈J_a} √n α_i o_i`, and the
//! test second-moment matrix is
//! `Σ_{i∈J_c} (d_i² − d_bulk²) o_i o_i^T + d_bulk² I`.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::linalg;
use crate::ridge::RidgePath;
use crate::roti_gcv::{estimate_snr_on_path, SnrEstimate, SnrRegression};
use crate::spectra::SpectralDecomposition;

/// z-score above which a direction is flagged as aligned by [`select_aligned`].
pub const ALIGNMENT_Z: f64 = 4.0;
/// Default overlap threshold for [`detect_coupled`].
pub const COUPLING_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSpec {
    /// `i ↦ α_i` for `i ∈ J_a`.
    pub aligned: BTreeMap<usize, f64>,
    /// `i ↦ d_i²` for `i ∈ J_c`.
    pub spike_levels: BTreeMap<usize, f64>,
    pub bulk_level: f64,
}

impl Default for AlignmentSpec {
    fn default() -> Self {
        Self { aligned: BTreeMap::new(), spike_levels: BTreeMap::new(), bulk_level: 1.0 }
    }
}

impl AlignmentSpec {
    pub fn new(aligned: BTreeMap<usize, f64>, spikes: &SpikeLevels) -> Self {
        Self { aligned, spike_levels: spikes.levels.clone(), bulk_level: spikes.bulk }
    }

    fn weight(&self, i: usize) -> f64 {
        self.spike_levels.get(&i).copied().unwrap_or(self.bulk_level)
    }

    fn validate(&self, spec: &SpectralDecomposition) -> Result<()> {
        for &i in self.aligned.keys().chain(self.spike_levels.keys()) {
            check_nonzero_index(spec, i)?;
        }
        if !(self.bulk_level > 0.0 && self.bulk_level.is_finite()) {
            return Err(Error::invalid(format!("bulk level must be > 0, got {}", self.bulk_level)));
        }
        if let Some((i, d)) = self.spike_levels.iter().find(|(_, d)| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::invalid(format!("spike level for index {i} must be > 0, got {d}")));
        }
        Ok(())
    }
}

fn check_nonzero_index(spec: &SpectralDecomposition, i: usize) -> Result<()> {
    let sv = spec.singular_values();
    if i >= sv.len() || sv[i] == 0.0 {
        return Err(Error::invalid(format!(
            "index {i} is not a nonzero singular direction (rank {})",
            spec.rank()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParts {
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
}

/// Bias and variance of ridge under alignment and coupling.
///
/// `r2` is the bulk signal strength `‖β'‖²/n`; aligned mass enters through the
/// `α_i` only.
pub fn aligned_risk(
    spec: &SpectralDecomposition,
    r2: f64,
    sigma2: f64,
    alignment: &AlignmentSpec,
    lambda: f64,
) -> Result<RiskParts> {
    require_positive(lambda)?;
    alignment.validate(spec)?;
    let n = spec.n() as f64;
    let bulk_coef = r2 / spec.gamma();
    let sv = spec.singular_values();
    let (mut bias, mut variance) = (0.0, 0.0);
    for i in 0..spec.p() {
        let d = if i < sv.len() { sv[i] * sv[i] } else { 0.0 };
        let den = (d + lambda) * (d + lambda);
        let w = alignment.weight(i);
        let signal = bulk_coef + alignment.aligned.get(&i).map_or(0.0, |a| n * a * a);
        bias += signal * w / den;
        variance += d * w / den;
    }
    let bias = lambda * lambda * bias / n;
    let variance = sigma2 * variance / n;
    Ok(RiskParts { bias, variance, total: bias + variance })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    /// Principal-components regression coefficients `(Q y)_i / s_i`, which estimate `√n α_i`.
    pub raw: BTreeMap<usize, f64>,
    /// `raw / √n`, estimates of `α_i`.
    pub scaled: BTreeMap<usize, f64>,
}

/// Principal-components regression of `y` on the aligned directions, via the
/// spectral shortcut `(Q y)_i / s_i`.
pub fn estimate_alpha(spec: &SpectralDecomposition, y: ArrayView1<'_, f64>, aligned: &[usize]) -> Result<AlphaEstimate> {
    alpha_from_rotated(spec, spec.rotate(y)?.view(), aligned)
}

fn alpha_from_rotated(
    spec: &SpectralDecomposition,
    rotated: ArrayView1<'_, f64>,
    aligned: &[usize],
) -> Result<AlphaEstimate> {
    let root_n = (spec.n() as f64).sqrt();
    let mut raw = BTreeMap::new();
    for &i in aligned {
        check_nonzero_index(spec, i)?;
        raw.insert(i, rotated[i] / spec.singular_values()[i]);
    }
    let scaled = raw.iter().map(|(&i, &a)| (i, a / root_n)).collect();
    Ok(AlphaEstimate { raw, scaled })
}

/// The same regression done literally: `X_proj = X O_{J}^T`,
/// `α̂ = (X_proj^T X_proj)^{-1} X_proj^T y` (raw scale).
pub fn estimate_alpha_pcr(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    aligned: &[usize],
    right_frame: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    if aligned.is_empty() {
        return Err(Error::invalid("aligned set is empty"));
    }
    let directions = Array2::from_shape_fn((x.ncols(), aligned.len()), |(r, c)| right_frame[[aligned[c], r]]);
    let x_proj = x.dot(&directions);
    let gram = x_proj.t().dot(&x_proj);
    Ok(linalg::spd_solve(gram.view(), &x_proj.t().dot(&y))?.to_vec())
}

/// Model with the aligned directions projected out: rows of `Q` outside `J_a`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// Original row positions (in the singular frame) retained, ascending.
    pub kept: Vec<usize>,
    /// `(n − |J_a|) × p`, row `t` equal to `s_{kept[t]} o_{kept[t]}^T`.
    pub x_new: Array2<f64>,
    /// `(Q y)_{kept}`.
    pub y_new: Array1<f64>,
    /// Decomposition of `x_new`, assembled without a new SVD (its left frame is the identity).
    pub spectral: SpectralDecomposition,
}

pub fn reduce_model(spec: &SpectralDecomposition, y: ArrayView1<'_, f64>, aligned: &[usize]) -> Result<ReducedModel> {
    reduce_from_rotated(spec, spec.rotate(y)?.view(), aligned)
}

fn reduce_from_rotated(
    spec: &SpectralDecomposition,
    rotated: ArrayView1<'_, f64>,
    aligned: &[usize],
) -> Result<ReducedModel> {
    let removed: BTreeSet<usize> = aligned.iter().copied().collect();
    for &i in &removed {
        check_nonzero_index(spec, i)?;
    }
    if removed.len() >= spec.rank() {
        return Err(Error::Degenerate("aligned set covers every nonzero singular direction".into()));
    }
    let (n, p) = (spec.n(), spec.p());
    let sv = spec.singular_values();
    let o = spec.right_frame();
    let kept: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
    let n_new = kept.len();

    let value_at = |i: usize| if i < sv.len() { sv[i] } else { 0.0 };
    let mut frame_order: Vec<usize> = kept.iter().copied().filter(|&i| i < p).collect();
    frame_order.extend(removed.iter().copied());
    frame_order.extend((0..p).filter(|i| *i >= n && !removed.contains(i)));
    let right = Array2::from_shape_fn((p, p), |(r, c)| o[[frame_order[r], c]]);
    let singular = Array1::from_shape_fn(n_new.min(p), |t| value_at(kept[t]));

    let mut x_new = Array2::<f64>::zeros((n_new, p));
    for (t, &i) in kept.iter().enumerate() {
        let s = value_at(i);
        if s > 0.0 {
            x_new.row_mut(t).assign(&o.row(i).mapv(|v| v * s));
        }
    }
    let y_new = Array1::from_shape_fn(n_new, |t| rotated[kept[t]]);
    let spectral = SpectralDecomposition::from_parts(singular, Array2::eye(n_new), right)?;
    Ok(ReducedModel { kept, x_new, y_new, spectral })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeLevels {
    pub levels: BTreeMap<usize, f64>,
    pub bulk: f64,
}

impl SpikeLevels {
    /// No coupled directions, unit bulk.
    pub fn isotropic() -> Self {
        Self { levels: BTreeMap::new(), bulk: 1.0 }
    }
}

/// Spike and bulk levels from test-design eigenvalues: `d_i²` is the i-th largest
/// eigenvalue, the bulk is the mean of the rest zero-padded to length `p`. Every
/// value is multiplied by `n_ratio` (training over test sample count).
pub fn estimate_spikes(test_eigenvalues: &[f64], coupled: &[usize], p: usize, n_ratio: f64) -> Result<SpikeLevels> {
    if test_eigenvalues.is_empty() {
        return Err(Error::invalid("no test eigenvalues"));
    }
    if test_eigenvalues.len() > p {
        return Err(Error::invalid(format!("{} test eigenvalues for p = {p}", test_eigenvalues.len())));
    }
    if !(n_ratio > 0.0 && n_ratio.is_finite()) {
        return Err(Error::invalid(format!("n_ratio must be > 0, got {n_ratio}")));
    }
    let coupled: BTreeSet<usize> = coupled.iter().copied().collect();
    if let Some(&i) = coupled.iter().find(|&&i| i >= test_eigenvalues.len()) {
        return Err(Error::invalid(format!(
            "coupled index {i} beyond {} test eigenvalues",
            test_eigenvalues.len()
        )));
    }
    if coupled.len() >= p {
        return Err(Error::invalid("coupled set leaves no bulk directions"));
    }
    let mut sorted = test_eigenvalues.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let levels: BTreeMap<usize, f64> = coupled.iter().map(|&i| (i, n_ratio * sorted[i])).collect();
    let rest: f64 = sorted.iter().enumerate().filter(|(i, _)| !coupled.contains(i)).map(|(_, v)| v).sum();
    let bulk = n_ratio * rest / (p - coupled.len()) as f64;
    if !(bulk > 0.0) {
        return Err(Error::Degenerate("bulk test eigenvalue level is zero".into()));
    }
    Ok(SpikeLevels { levels, bulk })
}

fn check_orthonormal_rows(frame: ArrayView2<'_, f64>, name: &str) -> Result<()> {
    let gram = frame.dot(&frame.t());
    let dev = gram
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if dev > 1e-6 {
        return Err(Error::invalid(format!("{name} rows are not orthonormal (Gram deviation {dev:e})")));
    }
    Ok(())
}

/// Flags training direction `i` (a row of `train_top`) as coupled when its largest
/// absolute overlap with any row of `test_top` exceeds `threshold`.
pub fn detect_coupled(train_top: ArrayView2<'_, f64>, test_top: ArrayView2<'_, f64>, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if train_top.ncols() != test_top.ncols() {
        return Err(Error::DimensionMismatch("frames have different ambient dimension".into()));
    }
    check_orthonormal_rows(train_top, "training frame")?;
    check_orthonormal_rows(test_top, "test frame")?;
    let overlaps = train_top.dot(&test_top.t());
    Ok(overlaps
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|v| v.abs() > threshold))
        .map(|(i, _)| i)
        .collect())
}

/// Heuristic choice of `J_a`: among the first `candidates` nonzero directions,
/// those with `|α̂_raw,i| s_i / σ̂ = |(Q y)_i| / σ̂ > 4`. Not a calibrated test.
pub fn select_aligned(spec: &SpectralDecomposition, rotated: ArrayView1<'_, f64>, sigma2_hat: f64, candidates: usize) -> Vec<usize> {
    if !(sigma2_hat > 0.0) {
        return Vec::new();
    }
    let sigma = sigma2_hat.sqrt();
    spec.nonzero_indices()
        .into_iter()
        .take(candidates)
        .filter(|&i| rotated[i].abs() / sigma > ALIGNMENT_Z)
        .collect()
}

/// aROTI-GCV fitted on one dataset.
#[derive(Debug, Clone)]
pub struct ArotiGcv<'a> {
    spec: &'a SpectralDecomposition,
    alignment: AlignmentSpec,
    alpha: AlphaEstimate,
    reduced_estimate: SnrEstimate,
    r2_bulk: f64,
}

impl<'a> ArotiGcv<'a> {
    pub fn fit(
        path: &RidgePath<'a>,
        aligned: &[usize],
        spikes: &SpikeLevels,
        estimation_grid: &[f64],
        regression: SnrRegression,
    ) -> Result<Self> {
        let spec = path.spec();
        let alpha = alpha_from_rotated(spec, path.rotated(), aligned)?;
        let reduced = reduce_from_rotated(spec, path.rotated(), aligned)?;
        let reduced_path = RidgePath::from_rotated(&reduced.spectral, reduced.y_new.clone());
        let reduced_estimate = estimate_snr_on_path(&reduced_path, estimation_grid, regression)?;
        // The reduced model measures ‖β'‖² per retained row; convert to per training row.
        let r2_bulk = reduced_estimate.r2_hat.max(0.0) * reduced.kept.len() as f64 / spec.n() as f64;
        let alignment = AlignmentSpec::new(alpha.scaled.clone(), spikes);
        alignment.validate(spec)?;
        Ok(Self { spec, alignment, alpha, reduced_estimate, r2_bulk })
    }

    pub fn alpha(&self) -> &AlphaEstimate {
        &self.alpha
    }

    /// SNR estimate on the reduced model (its `r2_hat` is per reduced row).
    pub fn reduced_estimate(&self) -> &SnrEstimate {
        &self.reduced_estimate
    }

    /// `‖β'‖²/n` estimate used in the risk formula.
    pub fn r2_bulk(&self) -> f64 {
        self.r2_bulk
    }

    pub fn sigma2(&self) -> f64 {
        self.reduced_estimate.sigma2_hat.max(0.0)
    }

    pub fn alignment(&self) -> &AlignmentSpec {
        &self.alignment
    }

    pub fn risk(&self, lambda: f64) -> Result<RiskParts> {
        aligned_risk(self.spec, self.r2_bulk, self.sigma2(), &self.alignment, lambda)
    }

    pub fn metric(&self, lambda: f64) -> Result<f64> {
        Ok(self.risk(lambda)?.total)
    }
}

pub fn aroti_gcv_metric(
    spec: &SpectralDecomposition,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    aligned: &[usize],
    spikes: &SpikeLevels,
    estimation_grid: &[f64],
) -> Result<f64> {
    let path = RidgePath::new(spec, y)?;
    ArotiGcv::fit(&path, aligned, spikes, estimation_grid, SnrRegression::FirstPoint)?.metric(lambda)
}
