//! SVD view of a design matrix and the empirical Stieltjes-transform quantities
//! built from it.
//!
//! With `X = Q^T D O` (Q n×n, O p×p orthogonal, D n×p diagonal), all downstream
//! computations only need the singular values `s_i`, the rotated response `Q y`
//! and, for coefficient vectors, the right frame `O`. Transforms are evaluated at
//! `z = -lambda` as finite sums:
//!
//! ```text
//! m(-λ) = (1/p) [ Σ_i 1/(s_i²+λ) + max(p-n, 0)/λ ]
//! v(-λ) = (1/n) [ Σ_i 1/(s_i²+λ) + max(n-p, 0)/λ ]
//! ```
//!
//! i.e. `m` runs over the p eigenvalues of `D^T D`, `v` over the n eigenvalues of
//! `D D^T`, both zero-padded.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{require_positive, Error, Result};
use crate::linalg;

/// Singular values below this fraction of the largest one are set to exactly zero.
pub const ZERO_SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    n: usize,
    p: usize,
    singular_values: Array1<f64>,
    left_frame: Array2<f64>,
    right_frame: Array2<f64>,
}

impl SpectralDecomposition {
    /// Assembles a decomposition from its factors. `left_frame` is `Q` (n×n),
    /// `right_frame` is `O` (p×p, rows are right singular vectors).
    pub fn from_parts(
        singular_values: Array1<f64>,
        left_frame: Array2<f64>,
        right_frame: Array2<f64>,
    ) -> Result<Self> {
        let n = left_frame.nrows();
        let p = right_frame.nrows();
        if left_frame.ncols() != n || right_frame.ncols() != p {
            return Err(Error::DimensionMismatch("frames must be square".into()));
        }
        if singular_values.len() != n.min(p) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} singular values, got {}",
                n.min(p),
                singular_values.len()
            )));
        }
        if singular_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("singular values must be finite and >= 0"));
        }
        if singular_values.windows(2).into_iter().any(|w| w[0] < w[1]) {
            return Err(Error::invalid("singular values must be nonincreasing"));
        }
        Ok(Self { n, p, singular_values, left_frame, right_frame })
    }

    /// Decomposition of the n×p "diagonal" matrix with the given singular values
    /// (identity frames). Handy for evaluating spectral formulas on synthetic spectra.
    pub fn from_singular_values(n: usize, p: usize, singular_values: &[f64]) -> Result<Self> {
        let mut s = singular_values.to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        Self::from_parts(Array1::from(s), Array2::eye(n), Array2::eye(p))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Aspect ratio p/n.
    pub fn gamma(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn singular_values(&self) -> ArrayView1<'_, f64> {
        self.singular_values.view()
    }

    /// `Q`, n×n; row `i` is the i-th left singular vector.
    pub fn left_frame(&self) -> ArrayView2<'_, f64> {
        self.left_frame.view()
    }

    /// `O`, p×p; row `i` is the i-th right singular vector `o_i`.
    pub fn right_frame(&self) -> ArrayView2<'_, f64> {
        self.right_frame.view()
    }

    /// Squared singular values `s_i²` (eigenvalues of `X^T X` without zero padding).
    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.singular_values.iter().map(|s| s * s)
    }

    /// Indices of the nonzero singular values.
    pub fn nonzero_indices(&self) -> Vec<usize> {
        (0..self.singular_values.len()).filter(|&i| self.singular_values[i] > 0.0).collect()
    }

    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|s| **s > 0.0).count()
    }

    /// `Tr(X^T X) / min(n, p)`.
    pub fn mean_eigenvalue(&self) -> f64 {
        self.eigenvalues().sum::<f64>() / self.singular_values.len() as f64
    }

    /// Rotated response `Q y`.
    pub fn rotate(&self, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "response has length {}, design has {} rows",
                y.len(),
                self.n
            )));
        }
        Ok(self.left_frame.dot(&y))
    }

    /// `Q^T D O`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let k = self.singular_values.len();
        let mut d_o = Array2::<f64>::zeros((self.n, self.p));
        for i in 0..k {
            let s = self.singular_values[i];
            d_o.row_mut(i).assign(&self.right_frame.row(i).mapv(|v| v * s));
        }
        self.left_frame.t().dot(&d_o)
    }
}

/// Computes the SVD of `x` with deterministic sign conventions: the largest-magnitude
/// entry of every right singular vector is positive.
pub fn svd_decompose(x: ArrayView2<'_, f64>) -> Result<SpectralDecomposition> {
    let (n, p) = x.dim();
    if n == 0 || p == 0 {
        return Err(Error::invalid("design must have at least one row and one column"));
    }
    if let Some(((row, col), &value)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col, value });
    }
    let (u, mut s, v) = linalg::full_svd(x)?;
    let mut q = u.reversed_axes();
    let mut o = v.reversed_axes();
    let k = s.len();

    let s_max = s.iter().cloned().fold(0.0, f64::max);
    s.mapv_inplace(|v| if v < ZERO_SINGULAR_RTOL * s_max { 0.0 } else { v });

    for i in 0..p {
        if dominant_entry(o.row(i)) < 0.0 {
            o.row_mut(i).mapv_inplace(|v| -v);
            if i < k {
                q.row_mut(i).mapv_inplace(|v| -v);
            }
        }
    }
    for i in k..n {
        if dominant_entry(q.row(i)) < 0.0 {
            q.row_mut(i).mapv_inplace(|v| -v);
        }
    }
    SpectralDecomposition::from_parts(s, q, o)
}

fn dominant_entry(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().fold(0.0, |best: f64, &x| if x.abs() > best.abs() { x } else { best })
}

/// Empirical Stieltjes transforms at `z = -lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValues {
    pub lambda: f64,
    /// `m_D(-λ)`, transform of the p eigenvalues of `D^T D`.
    pub m: f64,
    /// `m'_D(-λ)`.
    pub m_prime: f64,
    /// `v_D(-λ)`, companion transform over the n eigenvalues of `D D^T`.
    pub v: f64,
    /// `v'_D(-λ)`.
    pub v_prime: f64,
}

pub fn eval_transforms(spec: &SpectralDecomposition, lambda: f64) -> Result<TransformValues> {
    require_positive(lambda)?;
    let (n, p) = (spec.n, spec.p);
    let (mut s1, mut s2) = (0.0, 0.0);
    for d in spec.eigenvalues() {
        let r = 1.0 / (d + lambda);
        s1 += r;
        s2 += r * r;
    }
    let pad_m = p.saturating_sub(n) as f64;
    let pad_v = n.saturating_sub(p) as f64;
    Ok(TransformValues {
        lambda,
        m: (s1 + pad_m / lambda) / p as f64,
        m_prime: (s2 + pad_m / (lambda * lambda)) / p as f64,
        v: (s1 + pad_v / lambda) / n as f64,
        v_prime: (s2 + pad_v / (lambda * lambda)) / n as f64,
    })
}

/// `Tr(S_λ) = Σ_i s_i² / (s_i² + λ)`.
pub fn trace_smoother(spec: &SpectralDecomposition, lambda: f64) -> Result<f64> {
    require_positive(lambda)?;
    Ok(spec.eigenvalues().map(|d| d / (d + lambda)).sum())
}
