//! Total coherence minimization (TCM).
//!
//! The design alternates three closed-form steps: a tight target frame
//! `Phi*` aligned with the achievable sensing matrix, the per-cell gains
//! `beta*` that best fit that frame, and the least-squares beamformer
//! reproducing `beta*` through `B`.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use super::relative_total_coherence;
use crate::geometry::ChannelTables;
use crate::linalg::{scale_columns, thin_svd};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcmOptions {
    /// Singular values of `B` below `rcond * s_max` are dropped in the least-squares step.
    pub rcond: f64,
    /// Extra frame re-alignments after the first closed-form pass.
    pub refinements: usize,
}

impl Default for TcmOptions {
    fn default() -> Self {
        Self {
            rcond: 1e-2,
            refinements: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcmDiagnostics {
    /// Numerical rank of `A diag(eta)` over the focus cells.
    pub frame_rank: usize,
    /// Singular values of `B` kept by the truncated least-squares step.
    pub kept_singular_values: usize,
    /// Scale-free total coherence after every pass.
    pub coherence_trace: Vec<f64>,
    /// Pass whose beamformer was returned.
    pub selected_pass: usize,
}

/// `U V^H` from the thin SVD of `m`: the closest matrix with orthonormal rows (or columns).
fn polar_frame(m: &Mat<c64>) -> Result<(Mat<c64>, Vec<f64>)> {
    let (u, s, v) = thin_svd(m)?;
    Ok((&u * v.adjoint(), s))
}

fn numerical_rank(s: &[f64]) -> usize {
    let top = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&v| v > top * 1e-12 && v > 0.0).count()
}

/// Tight frame `Phi*` (unit `alpha`) aligned with the SVD of `a_norm diag(eta)`.
pub fn tcm_target_frame(a_norm: &Mat<c64>, eta: &[f64]) -> Result<Mat<c64>> {
    if eta.len() != a_norm.ncols() {
        return Err(Error::dim("pathloss vector", a_norm.ncols(), eta.len()));
    }
    if a_norm.nrows() > a_norm.ncols() {
        return Err(Error::Parameter(format!(
            "TCM frame needs M_r <= Q (got {} > {})",
            a_norm.nrows(),
            a_norm.ncols()
        )));
    }
    let d: Vec<c64> = eta.iter().map(|&e| c64::new(e, 0.0)).collect();
    Ok(polar_frame(&scale_columns(a_norm, &d))?.0)
}

/// Gains `beta*_q = conj([Phi^H A]_qq) / eta_q` fitting `A diag(eta) diag(beta)` to `phi`.
pub fn tcm_beta(phi: &Mat<c64>, a_norm: &Mat<c64>, eta: &[f64]) -> Result<Vec<c64>> {
    if phi.nrows() != a_norm.nrows() || phi.ncols() != a_norm.ncols() {
        return Err(Error::dim("frame columns", a_norm.ncols(), phi.ncols()));
    }
    if eta.len() != a_norm.ncols() {
        return Err(Error::dim("pathloss vector", a_norm.ncols(), eta.len()));
    }
    (0..phi.ncols())
        .map(|q| {
            if !(eta[q] > 0.0) {
                return Err(Error::Geometry(format!("zero pathloss at column {q}")));
            }
            let g: c64 = (0..phi.nrows()).map(|m| phi[(m, q)].conj() * a_norm[(m, q)]).sum();
            Ok(g.conj() / eta[q])
        })
        .collect()
}

/// Truncated-SVD pseudo-inverse applied to right-hand sides.
struct TruncatedLeastSquares {
    u: Mat<c64>,
    v: Mat<c64>,
    inv_s: Vec<f64>,
}

impl TruncatedLeastSquares {
    fn new(b: &Mat<c64>, rcond: f64) -> Result<Self> {
        let (u, s, v) = thin_svd(b)?;
        let top = s.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return Err(Error::Design("steering matrix B is zero".into()));
        }
        let inv_s = s.iter().map(|&v| if v > rcond * top { 1.0 / v } else { 0.0 }).collect();
        Ok(Self { u, v, inv_s })
    }

    fn kept(&self) -> usize {
        self.inv_s.iter().filter(|&&v| v > 0.0).count()
    }

    fn solve(&self, rhs: &[c64]) -> Vec<c64> {
        let k = self.inv_s.len();
        let coef: Vec<c64> = (0..k)
            .map(|j| {
                let p: c64 = (0..self.u.nrows()).map(|i| self.u[(i, j)].conj() * rhs[i]).sum();
                p * self.inv_s[j]
            })
            .collect();
        (0..self.v.nrows())
            .map(|m| (0..k).map(|j| self.v[(m, j)] * coef[j]).sum())
            .collect()
    }
}

/// TCM beamformer for the given cells, scaled to `||x||^2 = p`.
///
/// Pass 0 uses the frame aligned with `A diag(eta)`; every refinement re-aligns
/// the frame with the achieved `A diag(eta) diag(B x)`. The pass with the lowest
/// scale-free total coherence is returned.
pub fn tcm_pattern(
    tables: &ChannelTables,
    p: f64,
    cells: &[usize],
    opts: &TcmOptions,
) -> Result<(Vec<c64>, TcmDiagnostics)> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("power must be positive, got {p}")));
    }
    if cells.is_empty() {
        return Err(Error::Parameter("TCM needs at least one cell".into()));
    }
    if !(opts.rcond >= 0.0 && opts.rcond < 1.0) {
        return Err(Error::Config(format!(
            "TCM rcond must lie in [0, 1), got {}",
            opts.rcond
        )));
    }
    let q = tables.n_cells();
    if let Some(&bad) = cells.iter().find(|&&i| i >= q) {
        return Err(Error::Index { index: bad, len: q });
    }
    let m_tx = tables.m_tx();
    let a_norm = {
        let s = 1.0 / (tables.m_rx() as f64).sqrt();
        Mat::from_fn(tables.m_rx(), cells.len(), |m, j| tables.a_matrix[(m, cells[j])] * s)
    };
    let eta: Vec<f64> = cells.iter().map(|&i| tables.eta[i]).collect();
    let b = Mat::from_fn(cells.len(), m_tx, |j, m| tables.b_matrix[(cells[j], m)]);
    let ls = TruncatedLeastSquares::new(&b, opts.rcond)?;
    let weighted = scale_columns(&a_norm, &eta.iter().map(|&e| c64::new(e, 0.0)).collect::<Vec<_>>());

    let mut beta = vec![c64::new(1.0, 0.0); cells.len()];
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, Vec<c64>)> = None;
    let mut frame_rank = 0;
    for pass in 0..=opts.refinements {
        let (frame, s) = polar_frame(&scale_columns(&weighted, &beta))?;
        if pass == 0 {
            frame_rank = numerical_rank(&s);
        }
        let beta_star = tcm_beta(&frame, &a_norm, &eta)?;
        let mut x = ls.solve(&beta_star);
        let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Design("least-squares beamformer vanished".into()));
        }
        let scale = p.sqrt() / norm;
        x.iter_mut().for_each(|v| *v *= scale);
        beta = (0..cells.len())
            .map(|j| (0..m_tx).map(|m| b[(j, m)] * x[m]).sum())
            .collect();
        let tc = relative_total_coherence(&scale_columns(&weighted, &beta));
        trace.push(tc);
        if best.as_ref().is_none_or(|(v, _, _)| tc < *v) {
            best = Some((tc, pass, x));
        }
    }
    let (_, selected_pass, x) = best.expect("at least one pass");
    Ok((
        x,
        TcmDiagnostics {
            frame_rank,
            kept_singular_values: ls.kept(),
            coherence_trace: trace,
            selected_pass,
        },
    ))
}
