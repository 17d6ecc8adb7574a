//! Ridge estimates along a penalty path, computed from a cached decomposition.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::linalg;
use crate::spectra::SpectralDecomposition;

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub lambda: f64,
    pub beta_hat: Array1<f64>,
    /// `‖y − X β̂‖²`.
    pub residual_sq_norm: f64,
    /// `Tr(S_λ)`; the rank of `X` when `lambda == 0`.
    pub smoother_trace: f64,
}

/// A response rotated into the singular frame, reused for every penalty on a path.
#[derive(Debug, Clone)]
pub struct RidgePath<'a> {
    spec: &'a SpectralDecomposition,
    rotated: Array1<f64>,
    tail_sq: f64,
}

impl<'a> RidgePath<'a> {
    pub fn new(spec: &'a SpectralDecomposition, y: ArrayView1<'_, f64>) -> Result<Self> {
        let rotated = spec.rotate(y)?;
        Ok(Self::from_rotated(spec, rotated))
    }

    /// Builds a path from an already rotated response `Q y`.
    pub fn from_rotated(spec: &'a SpectralDecomposition, rotated: Array1<f64>) -> Self {
        let k = spec.singular_values().len();
        let tail_sq = rotated.slice(s![k..]).iter().map(|v| v * v).sum();
        Self { spec, rotated, tail_sq }
    }

    pub fn spec(&self) -> &'a SpectralDecomposition {
        self.spec
    }

    /// `Q y`.
    pub fn rotated(&self) -> ArrayView1<'_, f64> {
        self.rotated.view()
    }

    /// `s_i / (s_i² + λ)`, with the pseudoinverse convention for `s_i = 0`.
    fn gain(s: f64, lambda: f64) -> f64 {
        if s == 0.0 {
            0.0
        } else {
            s / (s * s + lambda)
        }
    }

    /// Fraction of `(Q y)_i` left in the residual.
    fn residual_factor(s: f64, lambda: f64) -> f64 {
        if s == 0.0 {
            1.0
        } else {
            lambda / (s * s + lambda)
        }
    }

    pub fn coefficients(&self, lambda: f64) -> Result<Array1<f64>> {
        require_nonnegative(lambda)?;
        let sv = self.spec.singular_values();
        let o = self.spec.right_frame();
        let mut beta = Array1::<f64>::zeros(self.spec.p());
        for (i, &s) in sv.iter().enumerate() {
            let c = Self::gain(s, lambda) * self.rotated[i];
            if c != 0.0 {
                beta.scaled_add(c, &o.row(i));
            }
        }
        Ok(beta)
    }

    /// `X β̂_λ`.
    pub fn fitted(&self, lambda: f64) -> Result<Array1<f64>> {
        require_nonnegative(lambda)?;
        let sv = self.spec.singular_values();
        let mut w = Array1::<f64>::zeros(self.spec.n());
        for (i, &s) in sv.iter().enumerate() {
            w[i] = s * Self::gain(s, lambda) * self.rotated[i];
        }
        Ok(self.spec.left_frame().t().dot(&w))
    }

    /// `y^T (I − S_λ)² y`, evaluated in O(min(n, p)).
    pub fn residual_sq_norm(&self, lambda: f64) -> Result<f64> {
        require_nonnegative(lambda)?;
        let head: f64 = self
            .spec
            .singular_values()
            .iter()
            .zip(self.rotated.iter())
            .map(|(&s, &q)| {
                let r = Self::residual_factor(s, lambda) * q;
                r * r
            })
            .sum();
        Ok(head + self.tail_sq)
    }

    /// `(1/n) ‖y − X β̂_λ‖²`.
    pub fn training_error(&self, lambda: f64) -> Result<f64> {
        Ok(self.residual_sq_norm(lambda)? / self.spec.n() as f64)
    }

    pub fn fit(&self, lambda: f64) -> Result<RidgeFit> {
        let smoother_trace = if lambda == 0.0 {
            self.spec.rank() as f64
        } else {
            crate::spectra::trace_smoother(self.spec, lambda)?
        };
        Ok(RidgeFit {
            lambda,
            beta_hat: self.coefficients(lambda)?,
            residual_sq_norm: self.residual_sq_norm(lambda)?,
            smoother_trace,
        })
    }
}

/// Ridge estimate `(X^T X + λI)^{-1} X^T y` evaluated spectrally.
pub fn ridge_fit(spec: &SpectralDecomposition, y: ArrayView1<'_, f64>, lambda: f64) -> Result<RidgeFit> {
    require_nonnegative(lambda)?;
    RidgePath::new(spec, y)?.fit(lambda)
}

/// Diagonal of the smoother `S_λ = X (X^T X + λI)^{-1} X^T`.
pub fn hat_diagonal(spec: &SpectralDecomposition, lambda: f64) -> Result<Array1<f64>> {
    require_positive(lambda)?;
    let q = spec.left_frame();
    let mut diag = Array1::<f64>::zeros(spec.n());
    for (k, d) in spec.eigenvalues().enumerate() {
        if d == 0.0 {
            continue;
        }
        let w = d / (d + lambda);
        diag.zip_mut_with(&q.row(k), |acc, &qk| *acc += w * qk * qk);
    }
    Ok(diag)
}

/// `(λ, (1/n) ‖y − X β̂_λ‖²)` over a grid, from one rotation of `y`.
pub fn training_error_curve(
    spec: &SpectralDecomposition,
    y: ArrayView1<'_, f64>,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    let path = RidgePath::new(spec, y)?;
    lambdas
        .iter()
        .map(|&l| {
            require_positive(l)?;
            Ok((l, path.training_error(l)?))
        })
        .collect()
}

/// Ridge by normal equations on the raw design; solves the smaller of the primal
/// (p×p) and dual (n×n) systems. Used where no decomposition is cached, e.g. on
/// cross-validation folds.
pub fn ridge_direct(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64) -> Result<Array1<f64>> {
    require_positive(lambda)?;
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("response length {} vs {n} rows", y.len())));
    }
    if p <= n {
        let mut gram: Array2<f64> = x.t().dot(&x);
        gram.diag_mut().mapv_inplace(|v| v + lambda);
        linalg::spd_solve(gram.view(), &x.t().dot(&y))
    } else {
        let mut gram: Array2<f64> = x.dot(&x.t());
        gram.diag_mut().mapv_inplace(|v| v + lambda);
        let dual = linalg::spd_solve(gram.view(), &y.to_owned())?;
        Ok(x.t().dot(&dual))
    }
}
