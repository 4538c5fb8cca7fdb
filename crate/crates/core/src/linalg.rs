//! Thin helpers over `faer` for the dense complex kernels used throughout.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Col, Mat, Side};

use crate::{Error, Result};

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// `exp(j * phase)`.
#[inline]
pub fn cis(phase: f64) -> c64 {
    let (s, c) = phase.sin_cos();
    c64::new(c, s)
}

/// Replaces `m` by `(m + m^H) / 2`.
pub fn hermitize(m: &mut Mat<c64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        m[(j, j)] = c64::new(m[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Relative Hermitian asymmetry `||m - m^H||_F / ||m||_F` (0 for the zero matrix).
pub fn hermitian_defect(m: &Mat<c64>) -> f64 {
    let n = m.nrows();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        for i in 0..n {
            num += (m[(i, j)] - m[(j, i)].conj()).norm_sqr();
            den += m[(i, j)].norm_sqr();
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

pub fn trace(m: &Mat<c64>) -> c64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn frobenius_sq(m: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s
}

pub fn col_norm_sq(v: &Col<c64>) -> f64 {
    (0..v.nrows()).map(|i| v[i].norm_sqr()).sum()
}

pub fn col_from_slice(v: &[c64]) -> Col<c64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub fn col_to_vec(v: &Col<c64>) -> Vec<c64> {
    (0..v.nrows()).map(|i| v[i]).collect()
}

/// `v^H w`.
pub fn dot(v: &Col<c64>, w: &Col<c64>) -> c64 {
    (0..v.nrows()).map(|i| v[i].conj() * w[i]).sum()
}

/// Eigen-decomposition of a Hermitian matrix: eigenvalues ascending, eigenvectors as columns.
pub fn hermitian_eigen(m: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))?;
    let s = evd.S();
    let vals = (0..m.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Largest eigenvalue and a unit eigenvector for it.
pub fn dominant_eigenpair(m: &Mat<c64>) -> Result<(f64, Col<c64>)> {
    let (vals, vecs) = hermitian_eigen(m)?;
    let k = vals.len() - 1;
    Ok((vals[k], vecs.col(k).to_owned()))
}

/// Cholesky factor `L` (lower) of a Hermitian positive definite matrix.
pub fn cholesky(m: &Mat<c64>) -> Result<Mat<c64>> {
    let llt = m
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Cholesky factorization failed: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// Inverse and log-determinant of a Hermitian positive definite matrix via one Cholesky.
pub fn hpd_inverse_logdet(m: &Mat<c64>) -> Result<(Mat<c64>, f64)> {
    let llt = m
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Cholesky factorization failed: {e:?}")))?;
    let l = llt.L();
    let logdet = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>();
    let mut inv = llt.inverse();
    hermitize(&mut inv);
    Ok((inv, logdet))
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hpd_inverse(m: &Mat<c64>) -> Result<Mat<c64>> {
    Ok(hpd_inverse_logdet(m)?.0)
}

/// Thin SVD `m = U diag(s) V^H`.
pub fn thin_svd(m: &Mat<c64>) -> Result<(Mat<c64>, Vec<f64>, Mat<c64>)> {
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s = svd.S();
    let k = m.nrows().min(m.ncols());
    let vals = (0..k).map(|i| s[i].re).collect();
    Ok((svd.U().to_owned(), vals, svd.V().to_owned()))
}

/// Full SVD `m = U diag(s) V^H` with square `U` and `V`.
pub fn full_svd(m: &Mat<c64>) -> Result<(Mat<c64>, Vec<f64>, Mat<c64>)> {
    let svd = m.svd().map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s = svd.S();
    let k = m.nrows().min(m.ncols());
    let vals = (0..k).map(|i| s[i].re).collect();
    Ok((svd.U().to_owned(), vals, svd.V().to_owned()))
}

/// Matrix with columns `m[:, q] * d[q]`.
pub fn scale_columns(m: &Mat<c64>, d: &[c64]) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[j])
}

/// Real-valued matrix as complex.
pub fn complexify(m: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}
