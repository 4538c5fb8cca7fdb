//! Max-min illumination SDP solved with a primal-dual interior-point method.
//!
//! The subproblem is
//!
//! ```text
//! maximize chi  s.t.  c_i^H X c_i >= chi,  tr X <= P,  X >= 0,
//!                     tr X - u^H X u <= rhs          (optional rank cut)
//! ```
//!
//! An optimal `X` can always be compressed onto the span of the `c_i` and `u`
//! without changing any constraint value, so the solver works on that
//! subspace. There it is written in standard form with one Hermitian PSD block
//! and non-negative scalars (`chi` and one slack per inequality), with data
//! scaled so that `tr X <= 1` and `max_i ||c_i||^2 = 1`. Search directions are
//! HKM with a Mehrotra predictor-corrector.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::linalg::{dominant_eigenpair, hermitian_eigen, hermitize, hpd_inverse, thin_svd, trace};
use crate::{Error, Result};

/// Linearized rank-one constraint `tr X - ||X_k||_2 - u^H (X - X_k) u <= eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCut {
    /// Dominant unit eigenvector `u` of the linearization point.
    pub u: Vec<c64>,
    /// `||X_k||_2`.
    pub spectral_norm: f64,
    /// `u^H X_k u`.
    pub u_quad: f64,
    pub eps: f64,
}

impl RankCut {
    /// Cut linearized at `x_ref`.
    pub fn at(x_ref: &Mat<c64>, eps: f64) -> Result<Self> {
        let (lam, u) = dominant_eigenpair(x_ref)?;
        let u: Vec<c64> = (0..u.nrows()).map(|i| u[i]).collect();
        let u_quad = quad(x_ref, &u);
        Ok(Self {
            u,
            spectral_norm: lam,
            u_quad,
            eps,
        })
    }

    /// Right-hand side of `tr X - u^H X u <= rhs`.
    pub fn rhs(&self) -> f64 {
        self.eps + self.spectral_norm - self.u_quad
    }
}

fn quad(x: &Mat<c64>, u: &[c64]) -> f64 {
    let mut s = c64::new(0.0, 0.0);
    for j in 0..u.len() {
        let mut col = c64::new(0.0, 0.0);
        for i in 0..u.len() {
            col += u[i].conj() * x[(i, j)];
        }
        s += col * u[j];
    }
    s.re
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    /// `M_t x K`, column `i` is `c_i = eta_i b_i`.
    pub constraint_vectors: Mat<c64>,
    pub power: f64,
    pub cut: Option<RankCut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Relative primal and dual infeasibility target (scaled problem).
    pub tol: f64,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// `chi` reported (relative to the power) when there is nothing to illuminate.
    pub chi_guard: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-9,
            gap_tol: 1e-9,
            chi_guard: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Solved,
    /// No illumination constraints: `chi` sits on the guard.
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SdpIterate {
    pub x_mat: Mat<c64>,
    pub chi: f64,
    pub dominant_vec: Vec<c64>,
    /// `||X||_* - ||X||_2`.
    pub rank_residual: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Largest constraint violation in scaled units.
    pub max_violation: f64,
    /// Final relative duality gap.
    pub gap: f64,
}

/// Scaled problem on an `n`-dimensional subspace.
///
/// Constraint rows are combinations of the basis matrices `E_0 = I` and
/// `E_l = v_l v_l^H`; `coef` holds those combinations (`rows x (1 + L)`).
/// Scalars are `[chi, s_1..s_K, s_tr, (s_cut)]`.
struct Standard {
    n: usize,
    /// `n x L`: the compressed `c_i`, then the compressed `u` when cutting.
    v: Mat<c64>,
    coef: Mat<f64>,
    /// Scalar columns, `rows x n_scalar`.
    lin: Mat<f64>,
    b: Vec<f64>,
    c_lin: Vec<f64>,
}

impl Standard {
    fn rows(&self) -> usize {
        self.b.len()
    }

    fn n_scalar(&self) -> usize {
        self.c_lin.len()
    }

    /// `Re tr(E_a W)` for every basis matrix.
    fn basis_values(&self, w: &Mat<c64>) -> Vec<f64> {
        let wv = w * &self.v;
        let mut e = Vec::with_capacity(1 + self.v.ncols());
        e.push(trace(w).re);
        for l in 0..self.v.ncols() {
            let s: c64 = (0..self.n).map(|r| self.v[(r, l)].conj() * wv[(r, l)]).sum();
            e.push(s.re);
        }
        e
    }

    /// Constraint values `A(W) + lin x`.
    fn apply(&self, w: &Mat<c64>, x: &[f64]) -> Vec<f64> {
        let e = self.basis_values(w);
        (0..self.rows())
            .map(|j| {
                let s: f64 = (0..e.len()).map(|a| self.coef[(j, a)] * e[a]).sum();
                s + (0..x.len()).map(|t| self.lin[(j, t)] * x[t]).sum::<f64>()
            })
            .collect()
    }

    /// `sum_j y_j A_j` (PSD block) and `lin^T y` (scalars).
    fn adjoint(&self, y: &[f64]) -> (Mat<c64>, Vec<f64>) {
        let na = 1 + self.v.ncols();
        let w: Vec<f64> = (0..na)
            .map(|a| (0..self.rows()).map(|j| self.coef[(j, a)] * y[j]).sum())
            .collect();
        let scaled = Mat::from_fn(self.n, self.v.ncols(), |r, l| self.v[(r, l)] * w[1 + l]);
        let mut m = &scaled * self.v.adjoint();
        for i in 0..self.n {
            m[(i, i)] += w[0];
        }
        hermitize(&mut m);
        let t = (0..self.n_scalar())
            .map(|s| (0..self.rows()).map(|j| self.lin[(j, s)] * y[j]).sum())
            .collect();
        (m, t)
    }

    /// Schur complement `M_ij = Re tr(A_i X A_j Z^-1) + sum_s lin_is (x_s / z_s) lin_js`.
    fn schur(&self, x: &Mat<c64>, zinv: &Mat<c64>, ratio: &[f64]) -> Mat<f64> {
        let nv = self.v.ncols();
        let xv = x * &self.v;
        let zv = zinv * &self.v;
        let p = self.v.adjoint() * &xv;
        let q = self.v.adjoint() * &zv;
        let xz = x * zinv;
        let na = 1 + nv;
        let mut g = Mat::<f64>::zeros(na, na);
        g[(0, 0)] = trace(&xz).re;
        for l in 0..nv {
            let s: c64 = (0..self.n).map(|r| zv[(r, l)].conj() * xv[(r, l)]).sum();
            g[(0, 1 + l)] = s.re;
            g[(1 + l, 0)] = s.re;
            for l2 in 0..nv {
                g[(1 + l, 1 + l2)] = (p[(l, l2)] * q[(l2, l)]).re;
            }
        }
        let cg = &self.coef * &g;
        let mut m = &cg * self.coef.transpose();
        for i in 0..self.rows() {
            for j in 0..self.rows() {
                let s: f64 = (0..self.n_scalar())
                    .map(|t| self.lin[(i, t)] * ratio[t] * self.lin[(j, t)])
                    .sum();
                m[(i, j)] += s;
            }
        }
        for i in 0..self.rows() {
            for j in 0..i {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        m
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dotr(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inner(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += (a[(i, j)].conj() * b[(i, j)]).re;
        }
    }
    s
}

fn lower_inverse(l: &Mat<c64>) -> Mat<c64> {
    let n = l.nrows();
    let mut inv = Mat::<c64>::zeros(n, n);
    for c in 0..n {
        inv[(c, c)] = c64::new(1.0, 0.0) / l[(c, c)];
        for r in c + 1..n {
            let mut s = c64::new(0.0, 0.0);
            for t in c..r {
                s += l[(r, t)] * inv[(t, c)];
            }
            inv[(r, c)] = -s / l[(r, r)];
        }
    }
    inv
}

/// Largest `alpha` with `X + alpha dX` PSD (infinite if `dX` is PSD).
fn psd_step(x: &Mat<c64>, dx: &Mat<c64>) -> Result<f64> {
    let l = x
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("interior iterate lost definiteness: {e:?}")))?;
    let li = lower_inverse(&l.L().to_owned());
    let mut t = &li * dx * li.adjoint();
    hermitize(&mut t);
    let (vals, _) = hermitian_eigen(&t)?;
    Ok(if vals[0] < 0.0 { -1.0 / vals[0] } else { f64::INFINITY })
}

fn lp_step(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky of the Schur complement, retried with a growing diagonal shift
/// when rounding has cost it definiteness near the optimum.
fn factor_schur(mut m: Mat<f64>) -> Result<faer::linalg::solvers::Llt<f64>> {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let mut shift = 0.0;
    for _ in 0..6 {
        match m.llt(Side::Lower) {
            Ok(l) => return Ok(l),
            Err(_) => {
                let next = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
                for i in 0..m.nrows() {
                    m[(i, i)] += next - shift;
                }
                shift = next;
            }
        }
    }
    Err(Error::Numerical("Schur complement is not positive definite".into()))
}

struct Direction {
    dx: Mat<c64>,
    dxl: Vec<f64>,
    dy: Vec<f64>,
    dz: Mat<c64>,
    dzl: Vec<f64>,
}

/// Orthonormal basis of the span of the columns of `m`.
fn range_basis(m: &Mat<c64>) -> Result<Mat<c64>> {
    let (u, s, _) = thin_svd(m)?;
    let top = s.iter().cloned().fold(0.0, f64::max);
    let r = s.iter().filter(|&&v| v > 1e-12 * top).count().max(1);
    Ok(Mat::from_fn(m.nrows(), r, |i, j| u[(i, j)]))
}

/// Solves one SDP subproblem.
pub fn solve_sdp_subproblem(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpIterate> {
    let m_full = problem.constraint_vectors.nrows();
    let k = problem.constraint_vectors.ncols();
    let p = problem.power;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("power must be positive, got {p}")));
    }
    if m_full == 0 {
        return Err(Error::Parameter("SDP needs at least one antenna".into()));
    }
    if let Some(cut) = &problem.cut {
        if cut.u.len() != m_full {
            return Err(Error::dim("rank-cut vector", m_full, cut.u.len()));
        }
        if !(cut.rhs() >= 0.0) {
            return Err(Error::Infeasible { iteration: 0 });
        }
    }
    let scale = (0..k)
        .map(|i| {
            (0..m_full)
                .map(|r| problem.constraint_vectors[(r, i)].norm_sqr())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    if k == 0 || scale == 0.0 {
        // Nothing to illuminate (or nothing reachable).
        let mut e = vec![c64::new(0.0, 0.0); m_full];
        e[0] = c64::new(1.0, 0.0);
        return Ok(SdpIterate {
            dominant_vec: e,
            x_mat: Mat::<c64>::zeros(m_full, m_full),
            chi: if k == 0 { opts.chi_guard * p } else { 0.0 },
            rank_residual: 0.0,
            status: if k == 0 {
                SdpStatus::Unbounded
            } else {
                SdpStatus::Solved
            },
            iterations: 0,
            max_violation: 0.0,
            gap: 0.0,
        });
    }
    let inv_sqrt = 1.0 / scale.sqrt();
    let cut_rhs = problem.cut.as_ref().map(|c| c.rhs() / p);
    let has_cut = cut_rhs.is_some();
    let n_vec = k + usize::from(has_cut);
    let raw = Mat::from_fn(m_full, n_vec, |r, l| {
        if l < k {
            problem.constraint_vectors[(r, l)] * inv_sqrt
        } else {
            problem.cut.as_ref().unwrap().u[r]
        }
    });
    let basis = range_basis(&raw)?;
    let n = basis.ncols();
    let v = basis.adjoint() * &raw;

    let rows = k + 1 + usize::from(has_cut);
    let n_scalar = k + 2 + usize::from(has_cut);
    let mut coef = Mat::<f64>::zeros(rows, 1 + n_vec);
    let mut lin = Mat::<f64>::zeros(rows, n_scalar);
    let mut b = vec![0.0; rows];
    for j in 0..k {
        coef[(j, 1 + j)] = 1.0;
        lin[(j, 0)] = -1.0;
        lin[(j, 1 + j)] = -1.0;
    }
    coef[(k, 0)] = 1.0;
    lin[(k, 1 + k)] = 1.0;
    b[k] = 1.0;
    if let Some(rhs) = cut_rhs {
        coef[(k + 1, 0)] = 1.0;
        coef[(k + 1, 1 + k)] = -1.0;
        lin[(k + 1, 2 + k)] = 1.0;
        b[k + 1] = rhs;
    }
    let mut c_lin = vec![0.0; n_scalar];
    c_lin[0] = -1.0;
    let sf = Standard {
        n,
        v,
        coef,
        lin,
        b,
        c_lin,
    };

    let eye = |s: f64| Mat::from_fn(n, n, |i, j| c64::new(if i == j { s } else { 0.0 }, 0.0));
    let mut x = eye(1.0 / n as f64);
    let mut xl = vec![1.0; n_scalar];
    let mut y = vec![0.0; rows];
    let mut z = eye(1.0);
    let mut zl = vec![1.0; n_scalar];
    let nb = norm2(&sf.b);
    let dim = (n + n_scalar) as f64;
    let mut status = SdpStatus::IterationLimit;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut breakdown = None;

    for it in 0..=opts.max_iter {
        // Residuals of the current iterate.
        let ax = sf.apply(&x, &xl);
        let rp: Vec<f64> = sf.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let (aty, atyl) = sf.adjoint(&y);
        let rd = Mat::from_fn(n, n, |i, j| -aty[(i, j)] - z[(i, j)]);
        let rdl: Vec<f64> = (0..n_scalar).map(|s| sf.c_lin[s] - atyl[s] - zl[s]).collect();
        let pobj = dotr(&sf.c_lin, &xl);
        let dobj = dotr(&sf.b, &y);
        let pinf = norm2(&rp) / (1.0 + nb);
        let dinf = (inner(&rd, &rd) + dotr(&rdl, &rdl)).sqrt() / 2.0;
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        iterations = it;
        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.gap_tol {
            status = SdpStatus::Solved;
            break;
        }
        last = (pinf, dinf, gap);
        if it == opts.max_iter {
            break;
        }
        let step: Result<()> = (|| {
            let mu = (inner(&x, &z) + dotr(&xl, &zl)) / dim;
            let zinv = hpd_inverse(&z).map_err(|_| Error::Numerical("dual slack lost definiteness".into()))?;
            let ratio: Vec<f64> = xl.iter().zip(&zl).map(|(a, b)| a / b).collect();
            let schur = sf.schur(&x, &zinv, &ratio);
            let llt = factor_schur(schur)?;
            let xrdz = &(&x * &rd) * &zinv;

            let direction = |sigma_mu: f64, corr: Option<&Direction>| -> Direction {
                // dX = K + X A^*(dy) Z^-1, with K collecting the dy-free terms.
                let mut kmat = Mat::from_fn(n, n, |i, j| sigma_mu * zinv[(i, j)] - x[(i, j)] - xrdz[(i, j)]);
                let mut kl: Vec<f64> = (0..n_scalar)
                    .map(|s| sigma_mu / zl[s] - xl[s] - ratio[s] * rdl[s])
                    .collect();
                if let Some(c) = corr {
                    let second = &(&c.dx * &c.dz) * &zinv;
                    for j in 0..n {
                        for i in 0..n {
                            kmat[(i, j)] -= second[(i, j)];
                        }
                    }
                    for s in 0..n_scalar {
                        kl[s] -= c.dxl[s] * c.dzl[s] / zl[s];
                    }
                }
                let ak = sf.apply(&kmat, &kl);
                let h = Mat::from_fn(rows, 1, |j, _| rp[j] - ak[j]);
                let sol = llt.solve(&h);
                let dy: Vec<f64> = (0..rows).map(|j| sol[(j, 0)]).collect();
                let (ady, adyl) = sf.adjoint(&dy);
                let dz = Mat::from_fn(n, n, |i, j| rd[(i, j)] - ady[(i, j)]);
                let dzl: Vec<f64> = (0..n_scalar).map(|s| rdl[s] - adyl[s]).collect();
                let xa = &(&x * &ady) * &zinv;
                let mut dx = Mat::from_fn(n, n, |i, j| kmat[(i, j)] + xa[(i, j)]);
                hermitize(&mut dx);
                let dxl: Vec<f64> = (0..n_scalar).map(|s| kl[s] + ratio[s] * adyl[s]).collect();
                Direction { dx, dxl, dy, dz, dzl }
            };
            let steps = |d: &Direction| -> Result<(f64, f64)> {
                let ap = psd_step(&x, &d.dx)?.min(lp_step(&xl, &d.dxl));
                let ad = psd_step(&z, &d.dz)?.min(lp_step(&zl, &d.dzl));
                Ok((ap, ad))
            };

            let pred = direction(0.0, None);
            let (ap, ad) = steps(&pred)?;
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let x_aff = Mat::from_fn(n, n, |i, j| x[(i, j)] + pred.dx[(i, j)] * ap);
            let z_aff = Mat::from_fn(n, n, |i, j| z[(i, j)] + pred.dz[(i, j)] * ad);
            let xl_aff: Vec<f64> = (0..n_scalar).map(|s| xl[s] + ap * pred.dxl[s]).collect();
            let zl_aff: Vec<f64> = (0..n_scalar).map(|s| zl[s] + ad * pred.dzl[s]).collect();
            let mu_aff = (inner(&x_aff, &z_aff) + dotr(&xl_aff, &zl_aff)) / dim;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let corr = direction(sigma * mu, Some(&pred));
            let (ap, ad) = steps(&corr)?;
            let tau = 0.95;
            let ap = (tau * ap).min(1.0);
            let ad = (tau * ad).min(1.0);
            for j in 0..n {
                for i in 0..n {
                    x[(i, j)] += corr.dx[(i, j)] * ap;
                    z[(i, j)] += corr.dz[(i, j)] * ad;
                }
            }
            hermitize(&mut x);
            hermitize(&mut z);
            for s in 0..n_scalar {
                xl[s] += ap * corr.dxl[s];
                zl[s] += ad * corr.dzl[s];
            }
            for j in 0..rows {
                y[j] += ad * corr.dy[j];
            }
            Ok(())
        })();
        if let Err(e) = step {
            breakdown = Some(e);
            break;
        }
        iterations = it + 1;
    }

    // Rounding can end the path early or stall it just short of the tolerances;
    // keep the iterate if it already meets 1e-6 feasibility and 1e-5 optimality.
    let (pinf, dinf, g) = last;
    let good_enough = pinf <= 1e-6 && dinf <= 1e-6 && g <= 1e-5;
    if let Some(e) = breakdown {
        if !good_enough {
            return Err(e);
        }
        status = SdpStatus::Solved;
    } else if status == SdpStatus::IterationLimit && good_enough {
        status = SdpStatus::Solved;
    }

    // Clip to the power budget, then take chi as the exact minimum.
    let tr = trace(&x).re;
    let mut max_violation = (tr - 1.0).max(0.0);
    if tr > 1.0 {
        x = Mat::from_fn(n, n, |i, j| x[(i, j)] / tr);
    }
    let e = sf.basis_values(&x);
    let chi_scaled = e[1..=k].iter().cloned().fold(f64::INFINITY, f64::min);
    if let Some(rhs) = cut_rhs {
        max_violation = max_violation.max(e[0] - e[1 + k] - rhs);
    }
    let (vals, vecs) = hermitian_eigen(&x)?;
    let top = vals[n - 1];
    let nuclear: f64 = vals.iter().map(|v| v.abs()).sum();
    let lifted = &basis * &x * basis.adjoint();
    let mut x_phys = Mat::from_fn(m_full, m_full, |i, j| lifted[(i, j)] * p);
    hermitize(&mut x_phys);
    let top_vec = Mat::from_fn(n, 1, |i, _| vecs[(i, n - 1)]);
    let dominant = &basis * &top_vec;
    Ok(SdpIterate {
        chi: chi_scaled * scale * p,
        dominant_vec: (0..m_full).map(|i| dominant[(i, 0)]).collect(),
        rank_residual: (nuclear - top) * p,
        x_mat: x_phys,
        status,
        iterations,
        max_violation,
        gap,
    })
}
