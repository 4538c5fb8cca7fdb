//! Sparse ground-truth scenes with AR-1 correlation across subcarriers.

use std::path::Path;

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::{magnitude_images, Image};
use crate::{Error, Result};

const TU_BERLIN: &str = include_str!("../assets/tu_berlin.txt");

/// Names accepted by [`Raster::builtin`].
pub const BUILTIN_RASTERS: &[&str] = &["tu_berlin"];

/// Toeplitz matrix with entries `psi^|n - n'|`.
pub fn ar1_correlation(n: usize, psi_coeff: f64) -> Result<Mat<c64>> {
    if !(psi_coeff.abs() < 1.0) {
        return Err(Error::Parameter(format!(
            "AR-1 coefficient must satisfy |psi| < 1, got {psi_coeff}"
        )));
    }
    Ok(Mat::from_fn(n, n, |i, j| {
        c64::new(psi_coeff.powi(i.abs_diff(j) as i32), 0.0)
    }))
}

/// How the first subcarrier's coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstColumn {
    /// Magnitude exactly `sqrt(gamma_i)` with a uniform random phase.
    #[default]
    RandomPhase,
    /// Circular complex Gaussian with variance `gamma_i`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    /// `Q x N` reflection coefficients, column `n` for subcarrier `n`.
    pub coeffs: Mat<c64>,
    pub support: Vec<bool>,
    /// Per-cell variance `gamma_i` (zero off support).
    pub rcs: Vec<f64>,
    pub psi: Mat<c64>,
    pub psi_coeff: f64,
    pub seed: u64,
}

impl GroundTruthScene {
    pub fn n_cells(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn support_size(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// Scene with a single coefficient of `value` at `cell` on every subcarrier.
    pub fn single_scatterer(q: usize, n: usize, cell: usize, value: c64) -> Result<Self> {
        if cell >= q {
            return Err(Error::Index { index: cell, len: q });
        }
        let mut support = vec![false; q];
        support[cell] = true;
        let mut rcs = vec![0.0; q];
        rcs[cell] = value.norm_sqr();
        let coeffs = Mat::from_fn(q, n, |i, _| if i == cell { value } else { c64::new(0.0, 0.0) });
        Ok(Self {
            coeffs,
            support,
            rcs,
            psi: Mat::from_fn(n, n, |_, _| c64::new(1.0, 0.0)),
            psi_coeff: 1.0,
            seed: 0,
        })
    }
}

fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> c64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64::new(re * s, im * s)
}

/// Draws a scene whose rows follow the AR-1 recursion
/// `rho_{n+1} = psi rho_n + sqrt(1 - psi^2) w_n`, `w_n ~ CN(0, gamma_i)`, `gamma_i = magnitude_i^2`.
pub fn generate_scene(
    mask: &[bool],
    magnitudes: &[f64],
    n_subcarriers: usize,
    psi_coeff: f64,
    seed: u64,
    first: FirstColumn,
) -> Result<GroundTruthScene> {
    if mask.len() != magnitudes.len() {
        return Err(Error::dim("scene magnitudes", mask.len(), magnitudes.len()));
    }
    if n_subcarriers == 0 {
        return Err(Error::Parameter("scene needs at least one subcarrier".into()));
    }
    let psi = ar1_correlation(n_subcarriers, psi_coeff)?;
    let q = mask.len();
    let rcs: Vec<f64> = mask
        .iter()
        .zip(magnitudes)
        .map(|(&m, &a)| if m { a * a } else { 0.0 })
        .collect();
    if rcs.iter().any(|g| !g.is_finite()) {
        return Err(Error::Parameter("scene magnitudes must be finite".into()));
    }
    let innovation = (1.0 - psi_coeff * psi_coeff).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = Mat::<c64>::zeros(q, n_subcarriers);
    for i in 0..q {
        if !mask[i] {
            continue;
        }
        let gamma = rcs[i];
        let mut rho = match first {
            FirstColumn::RandomPhase => {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                c64::from_polar(gamma.sqrt(), phase)
            }
            FirstColumn::Gaussian => complex_normal(&mut rng, gamma),
        };
        coeffs[(i, 0)] = rho;
        for n in 1..n_subcarriers {
            rho = rho * psi_coeff + complex_normal(&mut rng, gamma) * innovation;
            coeffs[(i, n)] = rho;
        }
    }
    Ok(GroundTruthScene {
        coeffs,
        support: mask.to_vec(),
        rcs,
        psi,
        psi_coeff,
        seed,
    })
}

/// Per-subcarrier magnitude images of the scene.
pub fn scene_to_images(scene: &GroundTruthScene) -> Vec<Image> {
    magnitude_images(&scene.coeffs)
}

/// Square binary raster, row-major from the top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    side: usize,
    bits: Vec<bool>,
}

impl Raster {
    pub fn new(side: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::dim("raster pixels", side * side, bits.len()));
        }
        Ok(Self { side, bits })
    }

    /// Parses a plain-text grid. Each non-empty line is one row; pixels are
    /// `1`/`#` (set) or `0`/`.` (clear) and may be separated by whitespace.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut rows: Vec<Vec<bool>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut row = Vec::new();
            for ch in line.chars().filter(|c| !c.is_whitespace()) {
                match ch {
                    '1' | '#' => row.push(true),
                    '0' | '.' => row.push(false),
                    other => return Err(format!("line {}: unexpected character {other:?}", ln + 1)),
                }
            }
            if !row.is_empty() {
                rows.push(row);
            }
        }
        let side = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != side) {
            return Err(format!(
                "raster must be square: {side} rows but row {} has {} pixels",
                bad + 1,
                rows[bad].len()
            ));
        }
        Ok(Self {
            side,
            bits: rows.into_iter().flatten().collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            msg,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "tu_berlin" => Ok(Self::parse(TU_BERLIN).expect("bundled raster parses")),
            other => Err(Error::Config(format!(
                "unknown built-in raster {other:?} (available: {BUILTIN_RASTERS:?})"
            ))),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Linear top-to-bottom magnitude ramp applied over the raster's support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnitudeProfile {
    pub top: f64,
    pub bottom: f64,
}

impl Default for MagnitudeProfile {
    fn default() -> Self {
        Self { top: 1.0, bottom: 0.3 }
    }
}

/// Support mask and per-cell magnitudes (max 1) for a raster on a `cells_per_side` grid.
pub fn render_bitmap(
    raster: &Raster,
    cells_per_side: usize,
    profile: MagnitudeProfile,
) -> Result<(Vec<bool>, Vec<f64>)> {
    if raster.side != cells_per_side {
        return Err(Error::dim("raster side", cells_per_side, raster.side));
    }
    if !(profile.top > 0.0 && profile.bottom > 0.0) {
        return Err(Error::Parameter("magnitude profile endpoints must be positive".into()));
    }
    let side = cells_per_side;
    let rows: Vec<usize> = (0..side * side).filter(|&k| raster.bits[k]).map(|k| k / side).collect();
    let mut mags = vec![0.0; side * side];
    if let (Some(&rmin), Some(&rmax)) = (rows.iter().min(), rows.iter().max()) {
        let peak = profile.top.max(profile.bottom);
        for k in 0..side * side {
            if raster.bits[k] {
                let frac = if rmax > rmin {
                    (k / side - rmin) as f64 / (rmax - rmin) as f64
                } else {
                    0.0
                };
                mags[k] = (profile.top + (profile.bottom - profile.top) * frac) / peak;
            }
        }
    }
    Ok((raster.bits.clone(), mags))
}
