//! Illumination power maximization (IPM) via successive convex approximation.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use super::min_illumination_power;
use super::sdp::{solve_sdp_subproblem, RankCut, SdpIterate, SdpOptions, SdpProblem, SdpStatus};
use crate::geometry::ChannelTables;
use crate::linalg::trace;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IpmOptions {
    /// Each cut lets the dominant direction turn by about `sqrt(eps_rel)` rad,
    /// so wide focus sets need many iterations.
    pub max_sca_iter: usize,
    /// Rank-cut slack as a fraction of `tr X` of the relaxed solution.
    pub eps_rel: f64,
    /// Relative change of `chi` between cut iterations that counts as converged.
    pub rel_change: f64,
    pub sdp: SdpOptions,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            max_sca_iter: 100,
            eps_rel: 1e-4,
            rel_change: 1e-3,
            sdp: SdpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmDiagnostics {
    /// `chi` of the rank-relaxed problem.
    pub relaxation_chi: f64,
    /// `chi` of every accepted cut iterate.
    pub chi_trace: Vec<f64>,
    /// `chi` returned by every cut subproblem, before the stall check.
    pub candidate_chi: Vec<f64>,
    pub rank_residuals: Vec<f64>,
    pub eps: f64,
    pub converged: bool,
    /// Minimum illuminated power of the returned beamformer over the focus cells.
    pub min_power: f64,
    pub sdp_iterations: Vec<usize>,
}

/// Maximizes the minimum illuminated power over `cells`; returns `x = sqrt(p) u`.
pub fn ipm_pattern(
    tables: &ChannelTables,
    p: f64,
    cells: &[usize],
    opts: &IpmOptions,
) -> Result<(Vec<c64>, IpmDiagnostics)> {
    if cells.is_empty() {
        return Err(Error::Parameter("IPM focus set is empty".into()));
    }
    let q = tables.n_cells();
    if let Some(&bad) = cells.iter().find(|&&i| i >= q) {
        return Err(Error::Index { index: bad, len: q });
    }
    let m_tx = tables.m_tx();
    let vectors = Mat::from_fn(m_tx, cells.len(), |m, j| {
        tables.b_matrix[(cells[j], m)].conj() * tables.eta[cells[j]]
    });
    let mut problem = SdpProblem {
        constraint_vectors: vectors,
        power: p,
        cut: None,
    };
    let relax = solve_sdp_subproblem(&problem, &opts.sdp)?;
    if relax.status == SdpStatus::IterationLimit {
        log::warn!("IPM relaxation hit the SDP iteration limit (gap {:.2e})", relax.gap);
    }
    let eps = opts.eps_rel * trace(&relax.x_mat).re;
    let mut diag = IpmDiagnostics {
        relaxation_chi: relax.chi,
        chi_trace: Vec::new(),
        candidate_chi: Vec::new(),
        rank_residuals: Vec::new(),
        eps,
        converged: false,
        min_power: 0.0,
        sdp_iterations: vec![relax.iterations],
    };
    let mut prev = relax;
    let mut accepted: Vec<SdpIterate> = Vec::new();
    for k in 1..=opts.max_sca_iter {
        let cut = RankCut::at(&prev.x_mat, eps)?;
        if !(cut.rhs() >= 0.0) {
            return Err(Error::Infeasible { iteration: k });
        }
        problem.cut = Some(cut);
        let cand = solve_sdp_subproblem(&problem, &opts.sdp)?;
        diag.sdp_iterations.push(cand.iterations);
        diag.candidate_chi.push(cand.chi);
        if cand.status == SdpStatus::IterationLimit {
            log::warn!("SCA iteration {k}: SDP hit the iteration limit (gap {:.2e})", cand.gap);
        }
        // The previous cut iterate is feasible for this subproblem, so a lower
        // chi can only come from solver inexactness.
        let stalled = !accepted.is_empty() && cand.chi < prev.chi;
        let next = if stalled { prev.clone() } else { cand };
        diag.chi_trace.push(next.chi);
        diag.rank_residuals.push(next.rank_residual);
        let change = if accepted.is_empty() {
            f64::INFINITY
        } else {
            (next.chi - prev.chi).abs() / prev.chi.abs().max(f64::MIN_POSITIVE)
        };
        accepted.push(next.clone());
        prev = next;
        if prev.rank_residual <= eps && (change < opts.rel_change || stalled) {
            diag.converged = true;
            break;
        }
    }
    let chosen = if diag.converged {
        prev
    } else {
        log::warn!(
            "IPM did not converge in {} SCA iterations; returning the best rank-feasible iterate",
            opts.max_sca_iter
        );
        let feasible = accepted
            .iter()
            .filter(|a| a.rank_residual <= eps)
            .max_by(|a, b| a.chi.total_cmp(&b.chi))
            .cloned();
        feasible
            .or_else(|| {
                accepted
                    .into_iter()
                    .min_by(|a, b| a.rank_residual.total_cmp(&b.rank_residual))
            })
            .unwrap_or(prev)
    };
    let s = p.sqrt();
    let x: Vec<c64> = chosen.dominant_vec.iter().map(|v| *v * s).collect();
    diag.min_power = min_illumination_power(&x, tables, cells)?;
    Ok((x, diag))
}
