//! Correlation-aware sparse Bayesian learning via expectation-maximization.
//!
//! Each cell's coefficients across subcarriers get a zero-mean Gaussian prior
//! with covariance `gamma_i diag(t_i) Psi diag(t_i)^H`. The E-step computes the
//! posterior of all coefficients, the M-step re-estimates `gamma` and `Psi`.

mod estep;
mod mstep;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::forward::{ObservationSet, SensingSet};
use crate::grid::{magnitude_images, Image};
use crate::Result;

pub use estep::{evidence, posterior, prior_blocks, Posterior};
pub use mstep::{ar1_coefficient, ar1_project, update_gamma, update_psi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SblOptions {
    pub max_iter: usize,
    /// Stop when the largest relative change of any `gamma_i` falls below this.
    pub tol: f64,
    /// Project `Psi` onto the AR-1 family after every M-step.
    pub ar1_projection: bool,
    /// `gamma` floor relative to its current maximum.
    pub gamma_floor_rel: f64,
    /// Relative slack when checking that the evidence does not increase.
    pub monotonic_slack: f64,
}

impl Default for SblOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-4,
            ar1_projection: true,
            gamma_floor_rel: 1e-12,
            monotonic_slack: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SblState {
    pub gamma: Vec<f64>,
    pub psi: Mat<c64>,
    /// `Q x N`, row `i` is the posterior mean of cell `i`.
    pub posterior_mean: Mat<c64>,
    pub posterior_blocks: Vec<Mat<c64>>,
    /// Evidence after each E-step, the last entry belonging to the returned state.
    pub evidence: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SblDiagnostics {
    pub converged: bool,
    /// Evidence increased beyond the slack (checked only without projection).
    pub diverged: bool,
    /// `(first superdiagonal / diagonal)` ratio of `Psi` after every M-step.
    pub psi_trace: Vec<f64>,
    /// Largest relative `gamma` change after every M-step.
    pub gamma_change: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SblOutcome {
    /// One magnitude image per subcarrier.
    pub images: Vec<Image>,
    pub state: SblState,
    pub diagnostics: SblDiagnostics,
}

fn psi_ratio(psi: &Mat<c64>) -> f64 {
    let n = psi.nrows();
    if n < 2 {
        return 0.0;
    }
    let m0 = (0..n).map(|a| psi[(a, a)].re).sum::<f64>() / n as f64;
    let m1 = (0..n - 1).map(|a| psi[(a, a + 1)].re).sum::<f64>() / (n - 1) as f64;
    m1 / m0
}

/// Runs EM from `gamma = 1`, `Psi = I` and returns the per-subcarrier magnitude
/// images of the posterior mean.
pub fn run_sbl(
    obs: &ObservationSet,
    sensing: &SensingSet,
    delay_phases: &Mat<c64>,
    opts: &SblOptions,
) -> Result<SblOutcome> {
    let q = sensing.n_cells();
    let n = sensing.n_subcarriers();
    let mut gamma = vec![1.0; q];
    let mut psi = Mat::from_fn(n, n, |a, b| c64::new(if a == b { 1.0 } else { 0.0 }, 0.0));
    let mut diag = SblDiagnostics::default();
    let mut trace = Vec::new();
    // (evidence, gamma, psi, posterior, iteration) of the lowest-evidence E-step.
    type Best = (f64, Vec<f64>, Mat<c64>, Posterior, usize);
    let mut best: Option<Best> = None;
    let mut iteration = 0;
    for it in 0..opts.max_iter {
        let post = posterior(&gamma, &psi, sensing, obs, delay_phases)?;
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if !opts.ar1_projection && post.evidence > prev + opts.monotonic_slack * prev.abs() {
                diag.diverged = true;
            }
        }
        trace.push(post.evidence);
        if best.as_ref().is_none_or(|b| post.evidence < b.0) {
            best = Some((post.evidence, gamma.clone(), psi.clone(), post.clone(), it));
        }
        let gamma_new = update_gamma(&post, &psi, delay_phases, opts.gamma_floor_rel)?;
        let mut psi_new = update_psi(&post, &gamma_new, delay_phases)?;
        if opts.ar1_projection {
            psi_new = ar1_project(&psi_new);
        }
        let floor = opts.gamma_floor_rel * gamma.iter().cloned().fold(0.0, f64::max);
        let change = gamma
            .iter()
            .zip(&gamma_new)
            .map(|(old, new)| (new - old).abs() / (old + floor))
            .fold(0.0, f64::max);
        diag.gamma_change.push(change);
        diag.psi_trace.push(psi_ratio(&psi_new));
        gamma = gamma_new;
        psi = psi_new;
        iteration = it + 1;
        if change < opts.tol {
            diag.converged = true;
            break;
        }
    }
    let mut post = posterior(&gamma, &psi, sensing, obs, delay_phases)?;
    if !opts.ar1_projection {
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if post.evidence > prev + opts.monotonic_slack * prev.abs() {
                diag.diverged = true;
            }
        }
    }
    trace.push(post.evidence);
    if diag.diverged {
        if let Some((_, g, p, bp, it)) = best {
            if bp.evidence < post.evidence {
                log::warn!("SBL evidence increased; returning the best iterate ({it})");
                gamma = g;
                psi = p;
                post = bp;
                iteration = it;
            }
        }
    }
    Ok(SblOutcome {
        images: magnitude_images(&post.mean),
        state: SblState {
            gamma,
            psi,
            posterior_mean: post.mean,
            posterior_blocks: post.blocks,
            evidence: trace,
            iteration,
        },
        diagnostics: diag,
    })
}
