//! Oracles and criterion checks shared by the integration tests and the
//! acceptance runner. Everything here is written independently of the crate's
//! own linear algebra: dense Gauss-Jordan, explicit stacked matrices, loops.
#![allow(dead_code, clippy::needless_range_loop)]

use nfimg::forward::{coefficient_vectors, synthesize_observations, ObservationSet, SensingSet};
use nfimg::geometry::{build_channel_tables, build_geometry, ChannelTables, GeometryConfig};
use nfimg::grid::Image;
use nfimg::illum::{
    column_normalized_total_coherence, fitted_alpha, ipm_pattern, quadrant_cells, solve_sdp_subproblem, tcm_beta,
    tcm_pattern, tcm_target_frame, total_coherence, uniform_pattern, IlluminationPlan, IpmOptions, PatternMode,
    SdpOptions, SdpProblem, TcmOptions,
};
use nfimg::metrics::{immse, pcc, psnr, ssim, SsimParams};
use nfimg::sbl::{posterior, run_sbl, update_gamma, update_psi, Posterior, SblOptions};
use nfimg::scene::{generate_scene, FirstColumn, GroundTruthScene};
use nfimg::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut ChaCha8Rng) -> c64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<c64> {
    Mat::from_fn(r, c, |_, _| cn(rng))
}

pub fn unit_phase(rng: &mut ChaCha8Rng) -> c64 {
    let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    c64::new(t.cos(), t.sin())
}

pub fn frob(m: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn sub(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn adjoint(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn matmul(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = Mat::<c64>::zeros(a.nrows(), b.ncols());
    for j in 0..b.ncols() {
        for k in 0..a.ncols() {
            let bkj = b[(k, j)];
            for i in 0..a.nrows() {
                out[(i, j)] += a[(i, k)] * bkj;
            }
        }
    }
    out
}

/// Gauss-Jordan with partial pivoting; also returns `log |det|`.
pub fn dense_inverse_logdet(m: &Mat<c64>) -> (Mat<c64>, f64) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = Mat::from_fn(n, n, |i, j| c64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[(x, col)].norm().partial_cmp(&a[(y, col)].norm()).unwrap())
            .unwrap();
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(piv, j)];
                inv[(piv, j)] = t;
            }
        }
        let p = a[(col, col)];
        assert!(p.norm() > 0.0, "singular matrix");
        logdet += p.norm().ln();
        let pinv = c64::new(1.0, 0.0) / p;
        for j in 0..n {
            a[(col, j)] *= pinv;
            inv[(col, j)] *= pinv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == c64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                a[(r, j)] -= f * ac;
                inv[(r, j)] -= f * ic;
            }
        }
    }
    (inv, logdet)
}

pub fn dense_inverse(m: &Mat<c64>) -> Mat<c64> {
    dense_inverse_logdet(m).0
}

/// Random Hermitian positive definite matrix with unit mean diagonal.
pub fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> Mat<c64> {
    let w = rand_mat(rng, n, n);
    let mut p = matmul(&w, &adjoint(&w));
    for i in 0..n {
        p[(i, i)] += c64::new(0.5, 0.0);
    }
    let s = (0..n).map(|i| p[(i, i)].re).sum::<f64>() / n as f64;
    Mat::from_fn(n, n, |i, j| p[(i, j)] / s)
}

pub fn dummy_plan(n: usize) -> IlluminationPlan {
    IlluminationPlan {
        vectors: vec![vec![c64::new(1.0, 0.0)]; n],
        per_subcarrier_power: 1.0,
        mode: PatternMode::Uniform,
        focus_cells: None,
    }
}

/// Small random SBL problem with sparse ground truth.
pub struct SblInstance {
    pub sensing: SensingSet,
    pub obs: ObservationSet,
    pub delay: Mat<c64>,
    pub gamma: Vec<f64>,
    pub psi: Mat<c64>,
}

pub fn sbl_instance(seed: u64, q: usize, n: usize, mr: usize, noise: f64) -> SblInstance {
    let mut r = rng(seed);
    let phi: Vec<Mat<c64>> = (0..n).map(|_| rand_mat(&mut r, mr, q)).collect();
    let delay = Mat::from_fn(q, n, |_, _| unit_phase(&mut r));
    let mut y = Mat::<c64>::zeros(mr, n);
    for i in 0..q {
        if r.random::<f64>() < 0.3 {
            let base = cn(&mut r);
            for k in 0..n {
                let v = base * delay[(i, k)] * (1.0 + 0.1 * k as f64);
                for m in 0..mr {
                    y[(m, k)] += phi[k][(m, i)] * v;
                }
            }
        }
    }
    for k in 0..n {
        for m in 0..mr {
            y[(m, k)] += cn(&mut r) * noise.sqrt();
        }
    }
    let gamma: Vec<f64> = (0..q).map(|_| 0.1 + 2.0 * r.random::<f64>()).collect();
    let psi = random_hpd(&mut r, n);
    SblInstance {
        sensing: SensingSet::from_matrices(phi, dummy_plan(n)).unwrap(),
        obs: ObservationSet {
            y,
            noise_power: noise,
            snr_db: None,
            seed,
        },
        delay,
        gamma,
        psi,
    }
}

/// Prior block of cell `i`, built entry by entry.
fn prior_block(inst: &SblInstance, gamma: &[f64], psi: &Mat<c64>, i: usize) -> Mat<c64> {
    let n = psi.nrows();
    Mat::from_fn(n, n, |a, b| {
        inst.delay[(i, a)] * psi[(a, b)] * inst.delay[(i, b)].conj() * gamma[i]
    })
}

/// Posterior mean (stacked, cell-major) and covariance from the explicit
/// `NQ x NQ` information form, plus the evidence from the `NM x NM` covariance.
pub fn direct_posterior(inst: &SblInstance, gamma: &[f64], psi: &Mat<c64>) -> (Vec<c64>, Mat<c64>, f64) {
    let (mr, q) = (inst.sensing.phi[0].nrows(), inst.sensing.phi[0].ncols());
    let n = psi.nrows();
    let mut prior = Mat::<c64>::zeros(q * n, q * n);
    for i in 0..q {
        let z = prior_block(inst, gamma, psi, i);
        for a in 0..n {
            for b in 0..n {
                prior[(i * n + a, i * n + b)] = z[(a, b)];
            }
        }
    }
    let mut phi = Mat::<c64>::zeros(mr * n, q * n);
    for k in 0..n {
        for m in 0..mr {
            for i in 0..q {
                phi[(m * n + k, i * n + k)] = inst.sensing.phi[k][(m, i)];
            }
        }
    }
    let y = Mat::from_fn(mr * n, 1, |r, _| inst.obs.y[(r / n, r % n)]);
    let n0 = inst.obs.noise_power;
    let ph = adjoint(&phi);
    let info = {
        let pinv = dense_inverse(&prior);
        let g = matmul(&ph, &phi);
        Mat::from_fn(q * n, q * n, |i, j| pinv[(i, j)] + g[(i, j)] / n0)
    };
    let sigma = dense_inverse(&info);
    let rhs = matmul(&ph, &y);
    let mu = matmul(&sigma, &Mat::from_fn(q * n, 1, |i, _| rhs[(i, 0)] / n0));
    let cov = {
        let t = matmul(&matmul(&phi, &prior), &ph);
        Mat::from_fn(mr * n, mr * n, |i, j| {
            t[(i, j)] + c64::new(if i == j { n0 } else { 0.0 }, 0.0)
        })
    };
    let (cinv, logdet) = dense_inverse_logdet(&cov);
    let quad = matmul(&adjoint(&y), &matmul(&cinv, &y))[(0, 0)].re;
    ((0..q * n).map(|i| mu[(i, 0)]).collect(), sigma, logdet + quad)
}

pub fn check_woodbury() -> Check {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut r = rng(2024);
    for t in 0..50 {
        let n = r.random_range(1..=4);
        let q = r.random_range(2..=(40 / n).min(10));
        let mr = r.random_range(2..=6);
        let inst = sbl_instance(1000 + t, q, n, mr, 0.05 + r.random::<f64>());
        let post = posterior(&inst.gamma, &inst.psi, &inst.sensing, &inst.obs, &inst.delay).unwrap();
        let (mu, sigma, ev) = direct_posterior(&inst, &inst.gamma, &inst.psi);
        let got = post.stacked_mean();
        let num: f64 = got.iter().zip(&mu).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = mu.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        worst.0 = worst.0.max(num / den);
        for i in 0..q {
            let want = Mat::from_fn(n, n, |a, b| sigma[(i * n + a, i * n + b)]);
            worst.1 = worst.1.max(frob(&sub(&post.blocks[i], &want)) / frob(&want));
        }
        worst.2 = worst.2.max((post.evidence - ev).abs() / ev.abs().max(1.0));
    }
    Check::new(
        worst.0 < 1e-10 && worst.1 < 1e-10 && worst.2 < 1e-10,
        format!(
            "max rel err: mean {:.1e}, cov blocks {:.1e}, evidence {:.1e}",
            worst.0, worst.1, worst.2
        ),
    )
}

pub fn check_em_monotone() -> Check {
    let mut worst = f64::NEG_INFINITY;
    for s in 0..20 {
        let inst = sbl_instance(500 + s, 12, 3, 8, 0.02);
        let mut gamma = vec![1.0; 12];
        let mut psi = Mat::from_fn(3, 3, |a, b| c64::new(if a == b { 1.0 } else { 0.0 }, 0.0));
        let mut prev: Option<f64> = None;
        for _ in 0..50 {
            let post = posterior(&gamma, &psi, &inst.sensing, &inst.obs, &inst.delay).unwrap();
            if let Some(p) = prev {
                worst = worst.max((post.evidence - p) / p.abs());
            }
            prev = Some(post.evidence);
            gamma = update_gamma(&post, &psi, &inst.delay, 1e-12).unwrap();
            psi = update_psi(&post, &gamma, &inst.delay).unwrap();
        }
    }
    Check::new(
        worst <= 1e-8,
        format!("largest relative evidence increase {worst:.2e} (slack 1e-8)"),
    )
}

/// EM surrogate `sum_i log det Z_i + tr(Z_i^-1 R_i)` with the blocks built explicitly.
fn surrogate(inst: &SblInstance, post: &Posterior, gamma: &[f64], psi: &Mat<c64>) -> f64 {
    let (q, n) = (post.mean.nrows(), post.mean.ncols());
    let mut total = 0.0;
    for i in 0..q {
        let z = prior_block(inst, gamma, psi, i);
        let (zinv, logdet) = dense_inverse_logdet(&z);
        let r = Mat::from_fn(n, n, |a, b| {
            post.mean[(i, a)] * post.mean[(i, b)].conj() + post.blocks[i][(a, b)]
        });
        let t = matmul(&zinv, &r);
        total += logdet + (0..n).map(|a| t[(a, a)].re).sum::<f64>();
    }
    total
}

/// Newton step `-f'/f''` from central differences; zero at a stationary point.
fn fd_newton(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let (fm, f0, fp) = (f(-h), f(0.0), f(h));
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
    -d1 / d2
}

pub fn check_mstep_stationarity() -> Check {
    let (mut worst_g, mut worst_p) = (0.0f64, 0.0f64);
    for s in 0..10 {
        let inst = sbl_instance(700 + s, 6, 3, 5, 0.1);
        let post = posterior(&inst.gamma, &inst.psi, &inst.sensing, &inst.obs, &inst.delay).unwrap();
        let g = update_gamma(&post, &inst.psi, &inst.delay, 1e-12).unwrap();
        for i in 0..g.len() {
            let h = 1e-3 * g[i];
            let step = fd_newton(
                |d| {
                    let mut gg = g.clone();
                    gg[i] += d;
                    surrogate(&inst, &post, &gg, &inst.psi)
                },
                h,
            );
            worst_g = worst_g.max(step.abs() / g[i]);
        }
        let psi = update_psi(&post, &g, &inst.delay).unwrap();
        let mut r = rng(900 + s);
        for _ in 0..5 {
            let w = rand_mat(&mut r, 3, 3);
            let mut dir = Mat::from_fn(3, 3, |a, b| w[(a, b)] + w[(b, a)].conj());
            let scale = frob(&psi) / frob(&dir);
            dir = Mat::from_fn(3, 3, |a, b| dir[(a, b)] * scale);
            let step = fd_newton(
                |t| {
                    let p = Mat::from_fn(3, 3, |a, b| psi[(a, b)] + dir[(a, b)] * t);
                    surrogate(&inst, &post, &g, &p)
                },
                1e-3,
            );
            worst_p = worst_p.max(step.abs());
        }
    }
    Check::new(
        worst_g < 1e-4 && worst_p < 1e-4,
        format!("finite-difference Newton step from the update: gamma {worst_g:.1e}, Psi {worst_p:.1e} (relative, limit 1e-4)"),
    )
}

pub fn tables_for(cfg: GeometryConfig) -> ChannelTables {
    build_channel_tables(&build_geometry(&cfg).unwrap()).unwrap()
}

pub fn default_tables() -> ChannelTables {
    tables_for(GeometryConfig::default())
}

pub fn small_config(m_tx: usize, m_rx: usize, side: usize, roi: f64) -> GeometryConfig {
    GeometryConfig {
        m_tx,
        m_rx,
        cells_per_side: side,
        roi_side: roi,
        ..GeometryConfig::default()
    }
}

fn uniform_phi(tables: &ChannelTables) -> Mat<c64> {
    nfimg::forward::sensing_matrix(tables, &uniform_pattern(1.0, tables.m_tx()).unwrap()).unwrap()
}

/// Minimizes `|eta beta a - phi|^2` over complex `beta` by a zooming grid search.
pub fn grid_beta(a: &[c64], phi: &[c64], eta: f64) -> c64 {
    let f = |b: c64| -> f64 { a.iter().zip(phi).map(|(x, p)| (x * b * eta - p).norm_sqr()).sum() };
    let scale = phi.iter().map(|p| p.norm()).sum::<f64>() / eta + 1e-12;
    let (mut center, mut half) = (c64::new(0.0, 0.0), 2.0 * scale);
    for _ in 0..6 {
        let mut best = (f64::INFINITY, center);
        for i in 0..=100 {
            for j in 0..=100 {
                let b = center + c64::new(half * (i as f64 / 50.0 - 1.0), half * (j as f64 / 50.0 - 1.0));
                let v = f(b);
                if v < best.0 {
                    best = (v, b);
                }
            }
        }
        center = best.1;
        half /= 10.0;
    }
    center
}

pub fn check_tcm() -> Check {
    let t = default_tables();
    let a_norm = t.a_normalized();
    let frame = tcm_target_frame(&a_norm, &t.eta).unwrap();
    let gram = matmul(&frame, &adjoint(&frame));
    let id_err = (0..gram.nrows())
        .flat_map(|i| (0..gram.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (gram[(i, j)] - c64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).norm())
        .fold(0.0, f64::max);

    let mut r = rng(55);
    let mut beta_err = 0.0f64;
    for _ in 0..10 {
        let raw = rand_mat(&mut r, 2, 3);
        let a = Mat::from_fn(2, 3, |i, j| {
            let n = (raw[(0, j)].norm_sqr() + raw[(1, j)].norm_sqr()).sqrt();
            raw[(i, j)] / n
        });
        let eta: Vec<f64> = (0..3).map(|_| 0.2 + r.random::<f64>()).collect();
        let frame = tcm_target_frame(&a, &eta).unwrap();
        let beta = tcm_beta(&frame, &a, &eta).unwrap();
        for q in 0..3 {
            let col = |m: &Mat<c64>| -> Vec<c64> { (0..2).map(|i| m[(i, q)]).collect() };
            let g = grid_beta(&col(&a), &col(&frame), eta[q]);
            beta_err = beta_err.max((g - beta[q]).norm() / beta[q].norm());
        }
    }

    let mut dominated = 0;
    let mut r = rng(77);
    for _ in 0..20 {
        let side = r.random_range(3..=6);
        let m_rx = r.random_range(4..=(side * side).min(12));
        let cfg = GeometryConfig {
            roi_center: [r.random_range(-2.0..2.0), r.random_range(-3.0..3.0)],
            ..small_config(r.random_range(4..=12), m_rx, side, r.random_range(2.0..12.0))
        };
        let tables = tables_for(cfg);
        let cells: Vec<usize> = (0..tables.n_cells()).collect();
        let (x, _) = tcm_pattern(&tables, 1.0, &cells, &TcmOptions::default()).unwrap();
        let phi_t = nfimg::forward::sensing_matrix(&tables, &x).unwrap();
        let phi_u = uniform_phi(&tables);
        if total_coherence(&phi_t, fitted_alpha(&phi_t)) <= total_coherence(&phi_u, fitted_alpha(&phi_u)) {
            dominated += 1;
        }
    }
    Check::new(
        id_err < 1e-10 && beta_err < 1e-2 && dominated == 20,
        format!("frame identity err {id_err:.1e}; beta vs grid search {beta_err:.1e}; TCM <= uniform on {dominated}/20 geometries"),
    )
}

pub fn check_normalized_invariance() -> Check {
    let t = default_tables();
    let mut r = rng(8);
    let vals: Vec<f64> = (0..10)
        .map(|_| {
            let x: Vec<c64> = (0..t.m_tx()).map(|_| cn(&mut r)).collect();
            column_normalized_total_coherence(&nfimg::forward::sensing_matrix(&t, &x).unwrap())
        })
        .collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Check::new(hi - lo <= 1e-10, format!("spread {:.1e} at value {lo:.6}", hi - lo))
}

/// Brute-force max-min power for `M_t = 2` over `x = sqrt(p) [cos t, sin t e^{j f}]`.
pub fn grid_maxmin_2(c: &[[c64; 2]], p: f64) -> f64 {
    let val = |t: f64, f: f64| -> f64 {
        let x = [c64::new(t.cos(), 0.0), c64::new(f.cos(), f.sin()) * t.sin()];
        c.iter()
            .map(|ci| (ci[0].conj() * x[0] + ci[1].conj() * x[1]).norm_sqr() * p)
            .fold(f64::INFINITY, f64::min)
    };
    let (mut ct, mut cf) = (std::f64::consts::FRAC_PI_4, std::f64::consts::PI);
    let (mut ht, mut hf) = (std::f64::consts::FRAC_PI_4, std::f64::consts::PI);
    let mut best = 0.0;
    for _ in 0..5 {
        let mut arg = (ct, cf);
        for i in 0..=200 {
            for j in 0..=200 {
                let t = (ct + ht * (i as f64 / 100.0 - 1.0)).clamp(0.0, std::f64::consts::FRAC_PI_2);
                let f = cf + hf * (j as f64 / 100.0 - 1.0);
                let v = val(t, f);
                if v > best {
                    best = v;
                    arg = (t, f);
                }
            }
        }
        (ct, cf) = arg;
        ht /= 20.0;
        hf /= 20.0;
    }
    best
}

pub fn check_ipm() -> Check {
    // Maximum ratio transmission for a single cell.
    let t = tables_for(small_config(16, 8, 5, 6.0));
    let mut mrt_err = 0.0f64;
    for cell in [0, 7, 12, 24] {
        let (x, _) = ipm_pattern(&t, 1.0, &[cell], &IpmOptions::default()).unwrap();
        let b = t.b_vector(cell);
        let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let inner: c64 = b.iter().zip(&x).map(|(u, v)| u.conj() * v).sum();
        let phase = inner / inner.norm();
        let err = x
            .iter()
            .zip(&b)
            .map(|(xv, bv)| (xv / nx - bv * phase / nb).norm_sqr())
            .sum::<f64>()
            .sqrt();
        mrt_err = mrt_err.max(err);
    }

    // Two antennas, two cells: compare against brute force.
    let mut grid_err = 0.0f64;
    let mut r = rng(31);
    for _ in 0..6 {
        let cfg = GeometryConfig {
            spacing: Some(r.random_range(0.01..0.2)),
            roi_center: [r.random_range(-3.0..3.0), 0.0],
            ..small_config(2, 4, 4, r.random_range(4.0..10.0))
        };
        let t = tables_for(cfg);
        let a = r.random_range(0..16);
        let b = (a + r.random_range(1..16)) % 16;
        let (_, d) = ipm_pattern(&t, 1.0, &[a, b], &IpmOptions::default()).unwrap();
        let c: Vec<[c64; 2]> = [a, b]
            .iter()
            .map(|&i| {
                let v = t.b_vector(i);
                [v[0] * t.eta[i], v[1] * t.eta[i]]
            })
            .collect();
        let best = grid_maxmin_2(&c, 1.0);
        grid_err = grid_err.max((d.min_power - best).abs() / best);
    }

    // SCA trace on wider focus sets.
    let (mut mono, mut rank_ok, mut runs) = (0.0f64, true, 0);
    let t = tables_for(small_config(16, 8, 6, 8.0));
    for cells in quadrant_cells(6) {
        let (_, d) = ipm_pattern(&t, 1.0, &cells, &IpmOptions::default()).unwrap();
        // Raw subproblem values: a rank-feasible cut iterate stays feasible for the next cut.
        for w in d.candidate_chi.windows(2) {
            mono = mono.max((w[0] - w[1]) / w[0].abs());
        }
        rank_ok &= d.converged && d.rank_residuals.last().is_some_and(|&r| r <= d.eps);
        runs += 1;
    }
    Check::new(
        mrt_err < 1e-6 && grid_err < 1e-2 && mono <= 1e-8 && rank_ok,
        format!(
            "MRT direction err {mrt_err:.1e}; 2-antenna vs grid {grid_err:.1e}; largest chi drop {mono:.1e}; rank residual <= eps on {runs} runs: {rank_ok}"
        ),
    )
}

/// Barrier-method oracle for `max chi s.t. c_i^T X c_i >= chi, tr X <= p, X >= 0`
/// over real symmetric 2x2 `X = [[a, b], [b, d]]`.
pub fn barrier_oracle(c: &[[f64; 2]], p: f64) -> f64 {
    let k = c.len();
    // Variables v = (a, b, d, chi); every constraint but det X is linear.
    let mut lin: Vec<([f64; 4], f64)> = c
        .iter()
        .map(|ci| ([ci[0] * ci[0], 2.0 * ci[0] * ci[1], ci[1] * ci[1], -1.0], 0.0))
        .collect();
    lin.push(([-1.0, 0.0, -1.0, 0.0], p));
    let mut v = [p / 2.0 * 0.9, 0.0, p / 2.0 * 0.9, 0.0];
    let cmin = lin[..k]
        .iter()
        .map(|(g, _)| g[0] * v[0] + g[2] * v[2])
        .fold(f64::INFINITY, f64::min);
    v[3] = cmin / 2.0;
    let slack = |v: &[f64; 4], g: &[f64; 4], h: f64| h + (0..4).map(|i| g[i] * v[i]).sum::<f64>();
    let feasible =
        |v: &[f64; 4]| v[0] > 0.0 && v[0] * v[2] - v[1] * v[1] > 0.0 && lin.iter().all(|(g, h)| slack(v, g, *h) > 0.0);
    let obj = |v: &[f64; 4], t: f64| {
        t * v[3] + (v[0] * v[2] - v[1] * v[1]).ln() + lin.iter().map(|(g, h)| slack(v, g, *h).ln()).sum::<f64>()
    };
    let mut t = 1.0 / p;
    while (k + 3) as f64 / t > 1e-10 * p {
        for _ in 0..100 {
            let mut grad = [0.0; 4];
            let mut hess = [[0.0; 4]; 4];
            grad[3] += t;
            let det = v[0] * v[2] - v[1] * v[1];
            let gd = [v[2], -2.0 * v[1], v[0], 0.0];
            let hd = [
                [0.0, 0.0, 1.0, 0.0],
                [0.0, -2.0, 0.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
                [0.0; 4],
            ];
            for i in 0..4 {
                grad[i] += gd[i] / det;
                for j in 0..4 {
                    hess[i][j] += hd[i][j] / det - gd[i] * gd[j] / (det * det);
                }
            }
            for (g, h) in &lin {
                let s = slack(&v, g, *h);
                for i in 0..4 {
                    grad[i] += g[i] / s;
                    for j in 0..4 {
                        hess[i][j] -= g[i] * g[j] / (s * s);
                    }
                }
            }
            // Newton direction: solve (-H) dv = grad by Gaussian elimination.
            let mut m = [[0.0; 5]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = -hess[i][j];
                }
                m[i][4] = grad[i];
            }
            for col in 0..4 {
                let piv = (col..4)
                    .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
                    .unwrap();
                m.swap(col, piv);
                for r in 0..4 {
                    if r != col {
                        let f = m[r][col] / m[col][col];
                        for j in col..5 {
                            m[r][j] -= f * m[col][j];
                        }
                    }
                }
            }
            let dv: [f64; 4] = std::array::from_fn(|i| m[i][4] / m[i][i]);
            let decrement: f64 = (0..4).map(|i| dv[i] * grad[i]).sum();
            if decrement < 1e-14 {
                break;
            }
            let mut s = 1.0;
            let f0 = obj(&v, t);
            loop {
                let cand: [f64; 4] = std::array::from_fn(|i| v[i] + s * dv[i]);
                if feasible(&cand) && obj(&cand, t) >= f0 + 0.25 * s * decrement {
                    v = cand;
                    break;
                }
                s *= 0.5;
                if s < 1e-16 {
                    break;
                }
            }
        }
        t *= 10.0;
    }
    v[3]
}

pub fn check_sdp_oracle() -> Check {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let k = r.random_range(2..=3);
        let c: Vec<[f64; 2]> = (0..k)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let problem = SdpProblem {
            constraint_vectors: Mat::from_fn(2, k, |i, j| c64::new(c[j][i], 0.0)),
            power: 1.0,
            cut: None,
        };
        let got = solve_sdp_subproblem(&problem, &SdpOptions::default()).unwrap().chi;
        let want = barrier_oracle(&c, 1.0);
        worst = worst.max((got - want).abs() / want.abs());
    }
    Check::new(worst < 1e-5, format!("2x2 real SDP vs barrier oracle {worst:.1e}"))
}

/// SSIM with the 2-D window evaluated directly at every pixel.
pub fn ssim_oracle(a: &Image, b: &Image, p: &SsimParams) -> f64 {
    let (rows, cols) = (a.rows(), a.cols());
    let r = p.radius as isize;
    let w = |d: isize| (-((d * d) as f64) / (2.0 * p.sigma * p.sigma)).exp();
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let mut total = 0.0;
    for i in 0..rows as isize {
        for j in 0..cols as isize {
            let (mut ws, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for di in -r..=r {
                for dj in -r..=r {
                    let (y, x) = (i + di, j + dj);
                    if y < 0 || x < 0 || y >= rows as isize || x >= cols as isize {
                        continue;
                    }
                    let wt = w(di) * w(dj);
                    let (va, vb) = (a.get(y as usize, x as usize), b.get(y as usize, x as usize));
                    ws += wt;
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let (ma, mb) = (ma / ws, mb / ws);
            let va = saa / ws - ma * ma;
            let vb = sbb / ws - mb * mb;
            let cov = sab / ws - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    total / (rows * cols) as f64
}

pub fn check_metrics() -> Check {
    let mut r = rng(88);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let a = Image::new(8, 8, (0..64).map(|_| r.random::<f64>()).collect());
        let b = Image::new(8, 8, (0..64).map(|_| r.random::<f64>()).collect());
        let params = SsimParams {
            radius: [5, 2, 1][k % 3],
            ..SsimParams::default()
        };
        worst = worst.max((ssim(&a, &b, &params).unwrap() - ssim_oracle(&a, &b, &params)).abs());
    }
    let x = Image::new(1, 2, vec![0.0, 1.0]);
    let y = Image::new(1, 2, vec![1.0, 1.0]);
    let u = Image::new(1, 3, vec![1.0, 2.0, 3.0]);
    let hand = immse(&x, &y).unwrap() == 0.5
        && psnr(&x, &y, 1.0).unwrap() == 10.0 * 2f64.log10()
        && pcc(&u, &Image::new(1, 3, vec![2.0, 4.0, 6.0])).unwrap() == Some(1.0)
        && pcc(&u, &Image::new(1, 3, vec![-1.0, -2.0, -3.0])).unwrap() == Some(-1.0)
        && pcc(&u, &Image::new(1, 3, vec![5.0; 3])).unwrap().is_none();
    Check::new(
        worst < 1e-9 && hand,
        format!("SSIM vs per-window oracle {worst:.1e}; hand cases exact: {hand}"),
    )
}

pub fn check_noise_and_ar1() -> Check {
    // Noise: zero signal, 250 realizations of 100 x 4 entries.
    let n0 = 3.7e-3;
    let sensing = SensingSet::from_matrices(vec![Mat::<c64>::zeros(100, 1); 4], dummy_plan(4)).unwrap();
    let u = Mat::<c64>::zeros(1, 4);
    let (mut acc, mut count) = (0.0, 0usize);
    for seed in 0..250 {
        let obs = synthesize_observations(&sensing, &u, n0, seed).unwrap();
        acc += frob(&obs.y).powi(2);
        count += 400;
    }
    let noise_err = (acc / count as f64 - n0).abs() / n0;

    // AR-1 rows: 1e5 draws, each a cell of unit variance.
    let psi_coeff = 0.9;
    let mut draws = 0;
    let mut ar1_err = 0.0f64;
    for first in [FirstColumn::RandomPhase, FirstColumn::Gaussian] {
        let mut cov = Mat::<c64>::zeros(4, 4);
        draws = 0;
        for seed in 0..5 {
            let s = generate_scene(&vec![true; 20_000], &vec![1.0; 20_000], 4, psi_coeff, seed, first).unwrap();
            for i in 0..s.n_cells() {
                for a in 0..4 {
                    for b in 0..4 {
                        cov[(a, b)] += s.coeffs[(i, a)] * s.coeffs[(i, b)].conj();
                    }
                }
                draws += 1;
            }
        }
        let want = Mat::from_fn(4, 4, |a, b| c64::new(psi_coeff.powi(a.abs_diff(b) as i32), 0.0));
        let got = Mat::from_fn(4, 4, |a, b| cov[(a, b)] / draws as f64);
        ar1_err = ar1_err.max(frob(&sub(&got, &want)) / frob(&want));
    }
    Check::new(
        noise_err < 0.02 && ar1_err < 0.02,
        format!("noise variance rel err {noise_err:.2e} over {count} draws; AR-1 covariance rel err {ar1_err:.2e} over {draws} draws per variant"),
    )
}

/// Noiseless single-scatterer recovery for each pattern on the given geometry.
pub fn check_single_scatterer(cfg: GeometryConfig, cell: usize) -> Check {
    let tables = tables_for(cfg.clone());
    let n = tables.n_subcarriers();
    let side = cfg.cells_per_side;
    let p = 1.0 / n as f64;
    let focus = quadrant_cells(side);
    let plans = [
        IlluminationPlan::uniform(p, tables.m_tx(), n).unwrap(),
        nfimg::illum::tcm_plan(&tables, p, &focus, &TcmOptions::default())
            .unwrap()
            .0,
        nfimg::illum::ipm_plan(&tables, p, &focus, &IpmOptions::default())
            .unwrap()
            .0,
    ];
    let scene = GroundTruthScene::single_scatterer(tables.n_cells(), n, cell, c64::new(1.0, 0.0)).unwrap();
    let u = coefficient_vectors(&scene, &tables).unwrap();
    let mut misses = Vec::new();
    for plan in &plans {
        let sensing = SensingSet::new(&tables, plan).unwrap();
        let y = sensing.apply(&u).unwrap();
        let power = frob(&y).powi(2) / (y.nrows() * y.ncols()) as f64;
        // The data carry no noise; the solver still needs a positive floor.
        let obs = ObservationSet {
            y,
            noise_power: power * 1e-8,
            snr_db: None,
            seed: 0,
        };
        let opts = SblOptions {
            max_iter: 100,
            ..SblOptions::default()
        };
        let out = run_sbl(&obs, &sensing, &tables.delay_phases, &opts).unwrap();
        for (k, im) in out.images.iter().enumerate() {
            if im.argmax() != cell {
                misses.push(format!("{} subcarrier {k} -> {}", plan.mode, im.argmax()));
            }
        }
    }
    Check::new(
        misses.is_empty(),
        if misses.is_empty() {
            format!("argmax at cell {cell} for all {n} subcarriers of uniform, tcm, ipm")
        } else {
            format!("misplaced: {}", misses.join(", "))
        },
    )
}
