//! Posterior moments and evidence through the Woodbury form.
//!
//! Internally the observation covariance is assembled subcarrier-major:
//! block `(n, k)` of `C = N0 I + Phi~ Gamma~ Phi~^H` is `Phi_n diag(z_nk) Phi_k^H`
//! with `z_nk[i] = Z_i[n, k]`.

use faer::{c64, Mat};

use crate::forward::{ObservationSet, SensingSet};
use crate::linalg::{cholesky, hermitize, hpd_inverse_logdet};
use crate::{Error, Result};

/// Posterior mean (`Q x N`, row `i` is the mean of cell `i`), the diagonal
/// `N x N` covariance blocks and the evidence at the hyperparameters used.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Mat<c64>,
    pub blocks: Vec<Mat<c64>>,
    pub evidence: f64,
}

impl Posterior {
    /// Mean in `vec(U^T)` order (blocks of `N` per cell).
    pub fn stacked_mean(&self) -> Vec<c64> {
        let (q, n) = (self.mean.nrows(), self.mean.ncols());
        (0..q * n).map(|k| self.mean[(k / n, k % n)]).collect()
    }
}

/// Prior blocks `Z_i = gamma_i diag(t_i) Psi diag(t_i)^H`.
pub fn prior_blocks(gamma: &[f64], psi: &Mat<c64>, delay_phases: &Mat<c64>) -> Result<Vec<Mat<c64>>> {
    let n = psi.nrows();
    if psi.ncols() != n {
        return Err(Error::dim("psi columns", n, psi.ncols()));
    }
    if delay_phases.nrows() != gamma.len() {
        return Err(Error::dim("delay-phase rows", gamma.len(), delay_phases.nrows()));
    }
    if delay_phases.ncols() != n {
        return Err(Error::dim("delay-phase columns", n, delay_phases.ncols()));
    }
    cholesky(psi).map_err(|_| Error::Numerical("correlation matrix is not positive definite".into()))?;
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::Parameter(format!("cell variances must be positive, got {g}")));
    }
    Ok(gamma
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            Mat::from_fn(n, n, |a, b| {
                delay_phases[(i, a)] * psi[(a, b)] * delay_phases[(i, b)].conj() * g
            })
        })
        .collect())
}

fn check_dims(sensing: &SensingSet, obs: &ObservationSet, q: usize, n: usize) -> Result<()> {
    if sensing.n_subcarriers() != n {
        return Err(Error::dim("sensing subcarriers", n, sensing.n_subcarriers()));
    }
    if sensing.n_cells() != q {
        return Err(Error::dim("sensing cells", q, sensing.n_cells()));
    }
    if obs.n_subcarriers() != n {
        return Err(Error::dim("observation subcarriers", n, obs.n_subcarriers()));
    }
    if obs.m_rx() != sensing.m_rx() {
        return Err(Error::dim("observation rows", sensing.m_rx(), obs.m_rx()));
    }
    if !(obs.noise_power > 0.0 && obs.noise_power.is_finite()) {
        return Err(Error::Parameter(format!(
            "posterior needs a positive noise power, got {}",
            obs.noise_power
        )));
    }
    Ok(())
}

/// `C = N0 I + Phi~ Gamma~ Phi~^H` in subcarrier-major order.
fn observation_covariance(sensing: &SensingSet, z: &[Mat<c64>], n0: f64) -> Mat<c64> {
    let n = sensing.n_subcarriers();
    let mr = sensing.m_rx();
    let q = sensing.n_cells();
    let mut c = Mat::<c64>::zeros(n * mr, n * mr);
    for a in 0..n {
        for b in a..n {
            let scaled = Mat::from_fn(mr, q, |m, i| sensing.phi[a][(m, i)] * z[i][(a, b)]);
            let blk = &scaled * sensing.phi[b].adjoint();
            for j in 0..mr {
                for i in 0..mr {
                    c[(a * mr + i, b * mr + j)] = blk[(i, j)];
                    if a != b {
                        c[(b * mr + j, a * mr + i)] = blk[(i, j)].conj();
                    }
                }
            }
        }
    }
    for d in 0..n * mr {
        c[(d, d)] += n0;
    }
    hermitize(&mut c);
    c
}

fn y_subcarrier_major(obs: &ObservationSet) -> Vec<c64> {
    let (mr, n) = (obs.m_rx(), obs.n_subcarriers());
    (0..n * mr).map(|k| obs.y[(k % mr, k / mr)]).collect()
}

/// Posterior of the stacked coefficients given `(gamma, psi)`.
pub fn posterior(
    gamma: &[f64],
    psi: &Mat<c64>,
    sensing: &SensingSet,
    obs: &ObservationSet,
    delay_phases: &Mat<c64>,
) -> Result<Posterior> {
    let q = gamma.len();
    let n = psi.nrows();
    check_dims(sensing, obs, q, n)?;
    let z = prior_blocks(gamma, psi, delay_phases)?;
    let mr = sensing.m_rx();
    let c = observation_covariance(sensing, &z, obs.noise_power);
    let (k_inv, logdet) = hpd_inverse_logdet(&c)?;
    let y = y_subcarrier_major(obs);
    let w: Vec<c64> = (0..n * mr)
        .map(|r| (0..n * mr).map(|s| k_inv[(r, s)] * y[s]).sum())
        .collect();
    let quad: f64 = y.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
    let evidence = logdet + quad;
    if !evidence.is_finite() {
        return Err(Error::Numerical("evidence is not finite".into()));
    }

    // g_k = Phi_k^H w_k
    let g: Vec<Vec<c64>> = (0..n)
        .map(|k| {
            (0..q)
                .map(|i| (0..mr).map(|m| sensing.phi[k][(m, i)].conj() * w[k * mr + m]).sum())
                .collect()
        })
        .collect();
    let mean = Mat::from_fn(q, n, |i, a| (0..n).map(|b| z[i][(a, b)] * g[b][i]).sum());

    // H_i[a, b] = (Phi_a^H K_ab Phi_b)_ii
    let mut h = vec![Mat::<c64>::zeros(n, n); q];
    for a in 0..n {
        for b in a..n {
            let kab = Mat::from_fn(mr, mr, |i, j| k_inv[(a * mr + i, b * mr + j)]);
            let p = &kab * &sensing.phi[b];
            for i in 0..q {
                let v: c64 = (0..mr).map(|m| sensing.phi[a][(m, i)].conj() * p[(m, i)]).sum();
                h[i][(a, b)] = v;
                if a != b {
                    h[i][(b, a)] = v.conj();
                }
            }
        }
    }
    let blocks = z
        .iter()
        .zip(&h)
        .map(|(zi, hi)| {
            let zh = zi * hi;
            let mut s = zi - &zh * zi;
            hermitize(&mut s);
            s
        })
        .collect();
    Ok(Posterior { mean, blocks, evidence })
}

/// Negative log evidence (up to constants) `log det C + y^H C^{-1} y`.
pub fn evidence(
    gamma: &[f64],
    psi: &Mat<c64>,
    sensing: &SensingSet,
    obs: &ObservationSet,
    delay_phases: &Mat<c64>,
) -> Result<f64> {
    let q = gamma.len();
    check_dims(sensing, obs, q, psi.nrows())?;
    let z = prior_blocks(gamma, psi, delay_phases)?;
    let c = observation_covariance(sensing, &z, obs.noise_power);
    let l = cholesky(&c)?;
    let y = y_subcarrier_major(obs);
    // Forward substitution L v = y; quad = ||v||^2.
    let dim = y.len();
    let mut v = vec![c64::new(0.0, 0.0); dim];
    for r in 0..dim {
        let mut acc = y[r];
        for s in 0..r {
            acc -= l[(r, s)] * v[s];
        }
        v[r] = acc / l[(r, r)];
    }
    let logdet = 2.0 * (0..dim).map(|r| l[(r, r)].re.ln()).sum::<f64>();
    let value = logdet + v.iter().map(|x| x.norm_sqr()).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::Numerical("evidence is not finite".into()));
    }
    Ok(value)
}
