//! Thin adapters between `ndarray` storage and the `faer` factorizations.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(a: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Full SVD `a = U diag(s) V^T` with `U` n×n and `V` p×p.
pub(crate) fn full_svd(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let m = to_faer(a);
    let svd = m
        .svd()
        .map_err(|e| Error::Decomposition(format!("faer svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = a.nrows().min(a.ncols());
    let sv = Array1::from_shape_fn(k, |i| s[i]);
    Ok((from_faer(svd.U()), sv, from_faer(svd.V())))
}

/// Singular values only, sorted nonincreasing.
pub(crate) fn singular_values(a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let m = to_faer(a);
    let mut s = m
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("faer singular values: {e:?}")))?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Thin QR with the sign of each `Q` column chosen so that `diag(R) >= 0`.
///
/// Applied to a Gaussian matrix this yields exactly Haar-distributed orthonormal
/// columns.
pub(crate) fn orthonormal_columns(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = to_faer(a);
    let qr = m.qr();
    let mut q = from_faer(qr.compute_thin_Q().as_ref());
    let r = qr.thin_R();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    q
}

/// Solves the SPD system `a x = b` by Cholesky.
pub(crate) fn spd_solve(a: ArrayView2<'_, f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let m = to_faer(a);
    let llt = m
        .llt(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("cholesky: {e:?}")))?;
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    Ok(Array1::from_shape_fn(b.len(), |i| x[(i, 0)]))
}
