//! Seeded design, signal and noise generators.
//!
//! Every family is scaled so that each row has second moment `E[x x^T] = I/n`
//! (for the invariant families) and `E Tr(X^T X) = p`, i.e. raw draws already
//! satisfy the trace normalization with `n' = n`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, streams};
use crate::spectra::SpectralDecomposition;

fn default_mu() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    GaussianIid,
    /// `x_i = ρ x_{i−1} + √(1−ρ²) ε_i`, started from the stationary law.
    AutocorrelatedRows { rho: f64 },
    /// Independent columns, each `N(0, Σ)` with `Σ_ij = ρ` off the diagonal.
    EquicorrelatedColumns { rho: f64 },
    /// Rows multivariate t with `nu` degrees of freedom.
    MultivariateTRows { nu: f64 },
    /// `G_1 G_2 ⋯ G_m` with the listed inner dimensions.
    ProductOfGaussians { inner: Vec<usize> },
    /// `strength · V W^T + G/√n` with Haar `V`, `W` of the given rank.
    Spiked { rank: usize, strength: f64 },
    /// Rows from `½ N(μ1, I) + ½ N(−μ1, I)`. Not rotationally invariant.
    GaussianMixtureRows {
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// Rows `N(0, Σ)` with `Σ_ij = ρ` off the diagonal. Not rotationally invariant.
    RowEquicorrelated { rho: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::GaussianIid => "gaussian_iid",
            Family::AutocorrelatedRows { .. } => "autocorrelated_rows",
            Family::EquicorrelatedColumns { .. } => "equicorrelated_columns",
            Family::MultivariateTRows { .. } => "multivariate_t_rows",
            Family::ProductOfGaussians { .. } => "product_of_gaussians",
            Family::Spiked { .. } => "spiked",
            Family::GaussianMixtureRows { .. } => "gaussian_mixture_rows",
            Family::RowEquicorrelated { .. } => "row_equicorrelated",
        }
    }

    pub fn is_rotationally_invariant(&self) -> bool {
        !matches!(self, Family::GaussianMixtureRows { .. } | Family::RowEquicorrelated { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
}

fn param_error(name: &str, detail: impl std::fmt::Display) -> Error {
    Error::invalid(format!("ensemble parameter `{name}`: {detail}"))
}

impl EnsembleSpec {
    pub fn new(family: Family, n: usize, p: usize, seed: u64) -> Self {
        Self { family, n, p, seed }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(param_error("n", "must be at least 1"));
        }
        if self.p == 0 {
            return Err(param_error("p", "must be at least 1"));
        }
        match &self.family {
            Family::GaussianIid => {}
            Family::AutocorrelatedRows { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(param_error("rho", format!("must lie in (-1, 1), got {rho}")));
                }
            }
            Family::EquicorrelatedColumns { rho } | Family::RowEquicorrelated { rho } => {
                if !(*rho >= 0.0 && *rho < 1.0) {
                    return Err(param_error("rho", format!("must lie in [0, 1), got {rho}")));
                }
            }
            Family::MultivariateTRows { nu } => {
                if !(*nu >= 3.0 && nu.is_finite()) {
                    return Err(param_error("nu", format!("must be >= 3, got {nu}")));
                }
            }
            Family::ProductOfGaussians { inner } => {
                if inner.contains(&0) {
                    return Err(param_error("inner", "dimensions must be positive"));
                }
            }
            Family::Spiked { rank, strength } => {
                if *rank == 0 || *rank > self.n.min(self.p) {
                    return Err(param_error("rank", format!("must lie in 1..=min(n, p), got {rank}")));
                }
                if !(*strength >= 0.0 && strength.is_finite()) {
                    return Err(param_error("strength", format!("must be >= 0, got {strength}")));
                }
            }
            Family::GaussianMixtureRows { mu } => {
                if !(*mu >= 0.0 && mu.is_finite()) {
                    return Err(param_error("mu", format!("must be >= 0, got {mu}")));
                }
            }
        }
        Ok(())
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Draws `X` from the stream derived from `ens.seed`.
pub fn generate_design(ens: &EnsembleSpec) -> Result<Array2<f64>> {
    generate_design_with(ens, &mut stream_rng(ens.seed, streams::DESIGN))
}

/// Draws `X` from a caller-supplied generator; used for repeated test draws.
pub fn generate_design_with<R: Rng + ?Sized>(ens: &EnsembleSpec, rng: &mut R) -> Result<Array2<f64>> {
    ens.validate()?;
    let (n, p) = (ens.n, ens.p);
    let root_n = (n as f64).sqrt();
    let x = match &ens.family {
        Family::GaussianIid => gaussian_matrix(n, p, rng) / root_n,
        Family::AutocorrelatedRows { rho } => {
            let mut x = gaussian_matrix(n, p, rng);
            let innovation = (1.0 - rho * rho).sqrt();
            for i in 1..n {
                let (prev, mut rest) = x.view_mut().split_at(Axis(0), i);
                let prev = prev.row(i - 1);
                rest.row_mut(0).zip_mut_with(&prev, |cur, &pv| *cur = rho * pv + innovation * *cur);
            }
            x / root_n
        }
        Family::EquicorrelatedColumns { rho } => {
            let shared: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let g = gaussian_matrix(n, p, rng);
            let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
            Array2::from_shape_fn((n, p), |(i, j)| (a * shared[j] + b * g[[i, j]]) / root_n)
        }
        Family::RowEquicorrelated { rho } => {
            let shared: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let g = gaussian_matrix(n, p, rng);
            let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
            Array2::from_shape_fn((n, p), |(i, j)| (a * shared[i] + b * g[[i, j]]) / root_n)
        }
        Family::MultivariateTRows { nu } => {
            let chi = ChiSquared::new(*nu).map_err(|e| param_error("nu", e))?;
            let mut x = gaussian_matrix(n, p, rng);
            let unit_var = ((nu - 2.0) / nu).sqrt();
            for mut row in x.rows_mut() {
                let w: f64 = chi.sample(rng);
                let f = unit_var / (w / nu).sqrt() / root_n;
                row.mapv_inplace(|v| v * f);
            }
            x
        }
        Family::ProductOfGaussians { inner } => {
            let mut x = gaussian_matrix(n, inner.first().copied().unwrap_or(p), rng);
            for (k, &d) in inner.iter().enumerate() {
                let next = inner.get(k + 1).copied().unwrap_or(p);
                x = x.dot(&gaussian_matrix(d, next, rng));
            }
            let inner_prod: f64 = inner.iter().map(|&d| d as f64).product();
            x / (n as f64 * inner_prod).sqrt()
        }
        Family::Spiked { rank, strength } => {
            let v = linalg::orthonormal_columns(gaussian_matrix(n, *rank, rng).view());
            let w = linalg::orthonormal_columns(gaussian_matrix(p, *rank, rng).view());
            let mut x = gaussian_matrix(n, p, rng) / root_n;
            x.scaled_add(*strength, &v.dot(&w.t()));
            let pf = p as f64;
            x * (pf / (pf + strength * strength * *rank as f64)).sqrt()
        }
        Family::GaussianMixtureRows { mu } => {
            let mut x = gaussian_matrix(n, p, rng);
            let f = 1.0 / (n as f64 * (1.0 + mu * mu)).sqrt();
            for mut row in x.rows_mut() {
                let shift = if rng.random::<bool>() { *mu } else { -*mu };
                row.mapv_inplace(|v| (v + shift) * f);
            }
            x
        }
    };
    Ok(x)
}

/// Rescales `X` so that `n' Tr(X^T X) / (n p) = 1`; returns the divisor used.
pub fn normalize_scale(x: ArrayView2<'_, f64>, n_prime: usize) -> Result<(Array2<f64>, f64)> {
    let (n, p) = x.dim();
    let trace: f64 = x.iter().map(|v| v * v).sum();
    if !(trace > 0.0) {
        return Err(Error::Degenerate("cannot normalize a zero design".into()));
    }
    let factor = (n_prime as f64 * trace / (n as f64 * p as f64)).sqrt();
    Ok((x.mapv(|v| v / factor), factor))
}

/// `β = β' + Σ_{i∈J_a} √n α_i o_i`.
///
/// The total strength is given either as `r2 = ‖β‖²/n` or as the absolute bulk
/// energy `bulk_norm_sq = ‖β'‖²`, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    #[serde(default)]
    pub r2: Option<f64>,
    #[serde(default)]
    pub bulk_norm_sq: Option<f64>,
    #[serde(default)]
    pub aligned_indices: Vec<usize>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SignalSpec {
    pub fn isotropic(r2: f64, seed: u64) -> Self {
        Self { r2: Some(r2), seed, ..Self::default() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn aligned_mass(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum()
    }

    pub fn validate(&self) -> Result<()> {
        match (self.r2, self.bulk_norm_sq) {
            (Some(v), None) | (None, Some(v)) if v >= 0.0 && v.is_finite() => {}
            (Some(_), Some(_)) => return Err(Error::Config("signal: give only one of r2, bulk_norm_sq".into())),
            (None, None) => return Err(Error::Config("signal: one of r2, bulk_norm_sq is required".into())),
            _ => return Err(Error::invalid("signal strength must be finite and >= 0")),
        }
        if self.aligned_indices.len() != self.alphas.len() {
            return Err(Error::Config(format!(
                "signal: {} aligned indices but {} alphas",
                self.aligned_indices.len(),
                self.alphas.len()
            )));
        }
        let mut sorted = self.aligned_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.aligned_indices.len() {
            return Err(Error::Config("signal: repeated aligned index".into()));
        }
        Ok(())
    }

    /// Target `‖β‖²/n` for a training set with `n` rows.
    pub fn total_r2(&self, n: usize) -> f64 {
        match (self.r2, self.bulk_norm_sq) {
            (Some(r2), _) => r2,
            (None, Some(b)) => b / n as f64 + self.aligned_mass(),
            (None, None) => f64::NAN,
        }
    }
}

/// Draws `β` with `‖β‖²/n` equal to the target. The random part is orthogonal to
/// the aligned directions, so `⟨β, o_i⟩ = √n α_i` exactly.
pub fn make_signal(sig: &SignalSpec, spec: &SpectralDecomposition) -> Result<Array1<f64>> {
    sig.validate()?;
    let (n, p) = (spec.n(), spec.p());
    let sv = spec.singular_values();
    let o = spec.right_frame();
    let root_n = (n as f64).sqrt();
    let mut beta = Array1::<f64>::zeros(p);
    for (&i, &a) in sig.aligned_indices.iter().zip(&sig.alphas) {
        if i >= sv.len() || sv[i] == 0.0 {
            return Err(Error::invalid(format!("aligned index {i} is not a nonzero singular direction")));
        }
        beta.scaled_add(root_n * a, &o.row(i));
    }
    let r2 = sig.total_r2(n);
    let mass = sig.aligned_mass();
    if mass > r2 * (1.0 + 1e-12) {
        return Err(Error::InfeasibleSignal { aligned_mass: mass, r2 });
    }
    let bulk = (n as f64 * (r2 - mass)).max(0.0);
    if bulk <= 1e-14 * n as f64 * r2.max(f64::MIN_POSITIVE) {
        return Ok(beta);
    }
    let mut rng = stream_rng(sig.seed, streams::SIGNAL);
    let mut g: Array1<f64> = Array1::from_shape_simple_fn(p, || rng.sample(StandardNormal));
    for &i in &sig.aligned_indices {
        let c = g.dot(&o.row(i));
        g.scaled_add(-c, &o.row(i));
    }
    let norm = g.dot(&g).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("no room for the bulk signal outside the aligned directions".into()));
    }
    beta.scaled_add(bulk.sqrt() / norm, &g);
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// `±σ` with equal probability.
    RademacherScaled,
    /// Student t with `nu ≥ 5`, rescaled to variance `σ²`.
    StudentT { nu: f64 },
}

impl NoiseFamily {
    pub fn validate(&self) -> Result<()> {
        if let NoiseFamily::StudentT { nu } = self {
            if !(*nu >= 5.0 && nu.is_finite()) {
                return Err(Error::invalid(format!("student_t noise needs nu >= 5, got {nu}")));
            }
        }
        Ok(())
    }
}

pub fn sample_noise<R: Rng + ?Sized>(len: usize, sigma2: f64, family: NoiseFamily, rng: &mut R) -> Result<Array1<f64>> {
    crate::error::require_nonnegative(sigma2)?;
    family.validate()?;
    let sigma = sigma2.sqrt();
    Ok(match family {
        NoiseFamily::Gaussian => Array1::from_shape_simple_fn(len, || sigma * rng.sample::<f64, _>(StandardNormal)),
        NoiseFamily::RademacherScaled => {
            Array1::from_shape_simple_fn(len, || if rng.random::<bool>() { sigma } else { -sigma })
        }
        NoiseFamily::StudentT { nu } => {
            let t = StudentT::new(nu).map_err(|e| Error::invalid(format!("student_t: {e}")))?;
            let f = sigma * ((nu - 2.0) / nu).sqrt();
            Array1::from_shape_simple_fn(len, || f * t.sample(rng))
        }
    })
}

/// `y = X β + ε` with the noise drawn from the stream of resample `resample`, so
/// that different resamples share `X` and `β`.
pub fn sample_response(
    x: ArrayView2<'_, f64>,
    beta: ArrayView1<'_, f64>,
    sigma2: f64,
    family: NoiseFamily,
    seed: u64,
    resample: u64,
) -> Result<Array1<f64>> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch(format!("{} columns vs β of length {}", x.ncols(), beta.len())));
    }
    let mut rng = stream_rng(seed, streams::NOISE_BASE + resample);
    let eps = sample_noise(x.nrows(), sigma2, family, &mut rng)?;
    Ok(x.dot(&beta) + eps)
}

/// A `p×p` orthogonal frame whose first rows are `fixed` and whose remaining rows
/// are a Haar-random orthonormal basis of the complement.
pub fn coupled_frame<R: Rng + ?Sized>(fixed: ArrayView2<'_, f64>, rng: &mut R) -> Array2<f64> {
    let (k, p) = fixed.dim();
    let mut basis = gaussian_matrix(p, p, rng);
    for j in 0..k {
        basis.column_mut(j).assign(&fixed.row(j));
    }
    let q = linalg::orthonormal_columns(basis.view());
    let mut frame = q.reversed_axes();
    // QR keeps span of the leading columns, but may flip signs.
    for j in 0..k {
        if frame.row(j).dot(&fixed.row(j)) < 0.0 {
            frame.row_mut(j).mapv_inplace(|v| -v);
        }
    }
    frame
}
