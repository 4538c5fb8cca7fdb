//! Hyperparameter updates.

use faer::{c64, Mat};

use super::Posterior;
use crate::linalg::{hermitian_defect, hermitize, hpd_inverse};
use crate::{Error, Result};

/// `diag(t_i)^H R_i diag(t_i)` with `R_i = mu_i mu_i^H + Sigma_i`, the second
/// moment with the delay phases removed.
fn dephased_moments(post: &Posterior, delay_phases: &Mat<c64>) -> Result<Vec<Mat<c64>>> {
    let q = post.mean.nrows();
    let n = post.mean.ncols();
    if post.blocks.len() != q {
        return Err(Error::dim("posterior blocks", q, post.blocks.len()));
    }
    if delay_phases.nrows() != q || delay_phases.ncols() != n {
        return Err(Error::dim("delay-phase rows", q, delay_phases.nrows()));
    }
    (0..q)
        .map(|i| {
            let s = &post.blocks[i];
            let r = Mat::from_fn(n, n, |a, b| post.mean[(i, a)] * post.mean[(i, b)].conj() + s[(a, b)]);
            if hermitian_defect(&r) > 1e-8 {
                return Err(Error::Numerical(format!("second moment of cell {i} is not Hermitian")));
            }
            let mut rt = Mat::from_fn(n, n, |a, b| {
                delay_phases[(i, a)].conj() * r[(a, b)] * delay_phases[(i, b)]
            });
            hermitize(&mut rt);
            Ok(rt)
        })
        .collect()
}

/// `gamma_i = tr(R_i W_i^{-1}) / N`, floored at `floor_rel * max_i gamma_i`.
pub fn update_gamma(post: &Posterior, psi: &Mat<c64>, delay_phases: &Mat<c64>, floor_rel: f64) -> Result<Vec<f64>> {
    let n = psi.nrows();
    let psi_inv = hpd_inverse(psi).map_err(|_| Error::Numerical("correlation matrix is not invertible".into()))?;
    let moments = dephased_moments(post, delay_phases)?;
    let raw: Vec<f64> = moments
        .iter()
        .map(|rt| {
            let mut t = 0.0;
            for a in 0..n {
                for b in 0..n {
                    t += (rt[(a, b)] * psi_inv[(b, a)]).re;
                }
            }
            t / n as f64
        })
        .collect();
    let top = raw.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::Numerical("all cell variances collapsed".into()));
    }
    let floor = floor_rel * top;
    Ok(raw.into_iter().map(|g| g.max(floor)).collect())
}

/// `Psi = (1/Q) sum_i gamma_i^{-1} diag(t_i)^{-1} R_i diag(t_i^*)^{-1}`, symmetrized.
pub fn update_psi(post: &Posterior, gamma_new: &[f64], delay_phases: &Mat<c64>) -> Result<Mat<c64>> {
    let q = post.mean.nrows();
    let n = post.mean.ncols();
    if gamma_new.len() != q {
        return Err(Error::dim("cell variances", q, gamma_new.len()));
    }
    if let Some(g) = gamma_new.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::Parameter(format!("cell variances must be positive, got {g}")));
    }
    let moments = dephased_moments(post, delay_phases)?;
    let mut acc = Mat::<c64>::zeros(n, n);
    for (rt, &g) in moments.iter().zip(gamma_new) {
        for b in 0..n {
            for a in 0..n {
                acc[(a, b)] += rt[(a, b)] / g;
            }
        }
    }
    let mut psi = Mat::from_fn(n, n, |a, b| acc[(a, b)] / q as f64);
    hermitize(&mut psi);
    Ok(psi)
}

/// Re-projects onto the unit-diagonal AR-1 family: `psi = m1 / m0` from the
/// mean diagonal and mean real first superdiagonal.
pub fn ar1_project(psi_hat: &Mat<c64>) -> Mat<c64> {
    let n = psi_hat.nrows();
    let identity = || Mat::from_fn(n, n, |a, b| c64::new(if a == b { 1.0 } else { 0.0 }, 0.0));
    if n < 2 {
        return identity();
    }
    let m0 = (0..n).map(|a| psi_hat[(a, a)].re).sum::<f64>() / n as f64;
    let m1 = (0..n - 1).map(|a| psi_hat[(a, a + 1)].re).sum::<f64>() / (n - 1) as f64;
    if !(m0 > 0.0) || !m1.is_finite() {
        return identity();
    }
    let lim = 1.0 - 1e-6;
    let r = (m1 / m0).clamp(-lim, lim);
    Mat::from_fn(n, n, |a, b| c64::new(r.powi(a.abs_diff(b) as i32), 0.0))
}

/// AR-1 coefficient of a unit-diagonal Toeplitz matrix (its first superdiagonal entry).
pub fn ar1_coefficient(psi: &Mat<c64>) -> f64 {
    if psi.nrows() < 2 {
        0.0
    } else {
        psi[(0, 1)].re / psi[(0, 0)].re
    }
}
