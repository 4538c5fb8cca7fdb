//! Per-subcarrier sensing matrices and noisy observations.
//!
//! Stacked vectors use the transpose-vectorization order: entry `m * N + n` of
//! `vec(Y^T)` is `Y[m, n]`, and entry `i * N + n` of `vec(U^T)` is `U[i, n]`.

use std::io::Write as _;
use std::path::Path;

use faer::{c64, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::ChannelTables;
use crate::illum::IlluminationPlan;
use crate::scene::GroundTruthScene;
use crate::{Error, Result};

/// `Phi = A diag(eta) diag(B x)`.
pub fn sensing_matrix(tables: &ChannelTables, x: &[c64]) -> Result<Mat<c64>> {
    if x.len() != tables.m_tx() {
        return Err(Error::dim("beamformer length", tables.m_tx(), x.len()));
    }
    let q = tables.n_cells();
    let gain: Vec<c64> = (0..q)
        .map(|i| {
            let bx: c64 = (0..x.len()).map(|m| tables.b_matrix[(i, m)] * x[m]).sum();
            bx * tables.eta[i]
        })
        .collect();
    Ok(Mat::from_fn(tables.m_rx(), q, |m, i| tables.a_matrix[(m, i)] * gain[i]))
}

/// Sensing matrices for every subcarrier of a plan.
#[derive(Debug, Clone)]
pub struct SensingSet {
    pub phi: Vec<Mat<c64>>,
    pub illumination: IlluminationPlan,
}

impl SensingSet {
    pub fn new(tables: &ChannelTables, plan: &IlluminationPlan) -> Result<Self> {
        if plan.n_subcarriers() != tables.n_subcarriers() {
            return Err(Error::dim(
                "plan subcarriers",
                tables.n_subcarriers(),
                plan.n_subcarriers(),
            ));
        }
        let phi = plan
            .vectors
            .iter()
            .map(|x| sensing_matrix(tables, x))
            .collect::<Result<_>>()?;
        Ok(Self {
            phi,
            illumination: plan.clone(),
        })
    }

    /// Builds a set directly from matrices (all `M_r x Q`).
    pub fn from_matrices(phi: Vec<Mat<c64>>, illumination: IlluminationPlan) -> Result<Self> {
        let first = phi
            .first()
            .ok_or_else(|| Error::Parameter("no sensing matrices".into()))?;
        let (r, c) = (first.nrows(), first.ncols());
        for p in &phi {
            if p.nrows() != r {
                return Err(Error::dim("sensing rows", r, p.nrows()));
            }
            if p.ncols() != c {
                return Err(Error::dim("sensing columns", c, p.ncols()));
            }
        }
        Ok(Self { phi, illumination })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.phi.len()
    }

    pub fn m_rx(&self) -> usize {
        self.phi[0].nrows()
    }

    pub fn n_cells(&self) -> usize {
        self.phi[0].ncols()
    }

    /// Noiseless `[Phi_1 u_1, ..., Phi_N u_N]` for a `Q x N` coefficient matrix.
    pub fn apply(&self, u: &Mat<c64>) -> Result<Mat<c64>> {
        if u.nrows() != self.n_cells() {
            return Err(Error::dim("coefficient rows", self.n_cells(), u.nrows()));
        }
        if u.ncols() != self.n_subcarriers() {
            return Err(Error::dim("coefficient columns", self.n_subcarriers(), u.ncols()));
        }
        let mut y = Mat::<c64>::zeros(self.m_rx(), self.n_subcarriers());
        for (n, phi) in self.phi.iter().enumerate() {
            let col = phi * u.col(n);
            for m in 0..self.m_rx() {
                y[(m, n)] = col[m];
            }
        }
        Ok(y)
    }

    /// Explicit `N M_r x N Q` stacked operator (only sensible for small instances).
    pub fn stacked_operator(&self) -> Mat<c64> {
        let n = self.n_subcarriers();
        let mut out = Mat::<c64>::zeros(n * self.m_rx(), n * self.n_cells());
        for (k, phi) in self.phi.iter().enumerate() {
            for m in 0..self.m_rx() {
                for i in 0..self.n_cells() {
                    out[(m * n + k, i * n + k)] = phi[(m, i)];
                }
            }
        }
        out
    }
}

/// `u_n = rho_n (elementwise) t_n` as a `Q x N` matrix.
pub fn coefficient_vectors(scene: &GroundTruthScene, tables: &ChannelTables) -> Result<Mat<c64>> {
    let (q, n) = (scene.n_cells(), scene.n_subcarriers());
    if q != tables.n_cells() {
        return Err(Error::dim("scene cells", tables.n_cells(), q));
    }
    if n != tables.n_subcarriers() {
        return Err(Error::dim("scene subcarriers", tables.n_subcarriers(), n));
    }
    Ok(Mat::from_fn(q, n, |i, k| {
        scene.coeffs[(i, k)] * tables.delay_phases[(i, k)]
    }))
}

/// Noise power giving `snr_db` relative to the mean per-entry noiseless signal
/// power under `reference_plan`.
pub fn calibrate_noise_power(
    tables: &ChannelTables,
    scene: &GroundTruthScene,
    reference_plan: &IlluminationPlan,
    snr_db: f64,
) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::Calibration(format!("SNR must be finite, got {snr_db}")));
    }
    let sensing = SensingSet::new(tables, reference_plan)?;
    let y0 = sensing.apply(&coefficient_vectors(scene, tables)?)?;
    let power = crate::linalg::frobenius_sq(&y0) / (y0.nrows() * y0.ncols()) as f64;
    if !(power > 0.0) {
        return Err(Error::Calibration("noiseless signal is zero".into()));
    }
    Ok(power / 10f64.powf(snr_db / 10.0))
}

/// Received matrix `Y` (`M_r x N`) and the noise power used to draw it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub y: Mat<c64>,
    pub noise_power: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl ObservationSet {
    pub fn m_rx(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.y.ncols()
    }

    /// `vec(Y^T)`.
    pub fn stacked(&self) -> Vec<c64> {
        let (mr, n) = (self.y.nrows(), self.y.ncols());
        (0..mr * n).map(|k| self.y[(k / n, k % n)]).collect()
    }

    /// CSV with `#` metadata lines and one `m,n,re,im` row per entry.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "# noise_power={}", self.noise_power).map_err(io)?;
        if let Some(snr) = self.snr_db {
            writeln!(f, "# snr_db={snr}").map_err(io)?;
        }
        writeln!(f, "# seed={}", self.seed).map_err(io)?;
        writeln!(f, "# shape={}x{}", self.y.nrows(), self.y.ncols()).map_err(io)?;
        let mut w = csv::Writer::from_writer(f);
        let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        w.write_record(["m", "n", "re", "im"]).map_err(csv_err)?;
        for m in 0..self.y.nrows() {
            for n in 0..self.y.ncols() {
                let v = self.y[(m, n)];
                w.write_record([m.to_string(), n.to_string(), v.re.to_string(), v.im.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let (mut noise, mut snr, mut seed, mut shape) = (None, None, 0u64, None);
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            let (k, v) = line
                .trim()
                .split_once('=')
                .ok_or_else(|| perr(format!("bad metadata line {line:?}")))?;
            match k {
                "noise_power" => noise = Some(v.parse::<f64>().map_err(|e| perr(e.to_string()))?),
                "snr_db" => snr = Some(v.parse::<f64>().map_err(|e| perr(e.to_string()))?),
                "seed" => seed = v.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
                "shape" => {
                    let (r, c) = v.split_once('x').ok_or_else(|| perr("bad shape".into()))?;
                    let r: usize = r.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
                    let c: usize = c.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
                    shape = Some((r, c));
                }
                other => return Err(perr(format!("unknown metadata key {other:?}"))),
            }
        }
        let (rows, cols) = shape.ok_or_else(|| perr("missing shape".into()))?;
        let mut y = Mat::<c64>::zeros(rows, cols);
        let mut seen = vec![false; rows * cols];
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let field = |i: usize| rec.get(i).ok_or_else(|| perr("short record".into()));
            let m: usize = field(0)?
                .parse()
                .map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
            let n: usize = field(1)?
                .parse()
                .map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
            let re: f64 = field(2)?
                .parse()
                .map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?;
            let im: f64 = field(3)?
                .parse()
                .map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?;
            if m >= rows || n >= cols {
                return Err(perr(format!("entry ({m}, {n}) outside {rows}x{cols}")));
            }
            y[(m, n)] = c64::new(re, im);
            seen[m * cols + n] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(perr("observation matrix has missing entries".into()));
        }
        Ok(Self {
            y,
            noise_power: noise.ok_or_else(|| perr("missing noise_power".into()))?,
            snr_db: snr,
            seed,
        })
    }
}

/// `Y = [Phi_n u_n] + noise` with i.i.d. `CN(0, noise_power)` entries; subcarrier
/// `n` draws from stream `n` of a generator seeded with `seed`.
pub fn synthesize_observations(
    sensing: &SensingSet,
    u: &Mat<c64>,
    noise_power: f64,
    seed: u64,
) -> Result<ObservationSet> {
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise power must be non-negative, got {noise_power}"
        )));
    }
    let mut y = sensing.apply(u)?;
    if noise_power > 0.0 {
        let s = (noise_power / 2.0).sqrt();
        for n in 0..y.ncols() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            for m in 0..y.nrows() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                y[(m, n)] += c64::new(re * s, im * s);
            }
        }
    }
    Ok(ObservationSet {
        y,
        noise_power,
        snr_db: None,
        seed,
    })
}
