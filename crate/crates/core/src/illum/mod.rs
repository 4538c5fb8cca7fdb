//! Transmit illumination design: uniform, TCM and IPM patterns.

mod ipm;
mod sdp;
mod tcm;

use std::fmt::Write as _;
use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::geometry::ChannelTables;
use crate::{Error, Result};

pub use ipm::{ipm_pattern, IpmDiagnostics, IpmOptions};
pub use sdp::{solve_sdp_subproblem, RankCut, SdpIterate, SdpOptions, SdpProblem, SdpStatus};
pub use tcm::{tcm_beta, tcm_pattern, tcm_target_frame, TcmDiagnostics, TcmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternMode {
    Uniform,
    Tcm,
    Ipm,
}

impl PatternMode {
    pub const ALL: [PatternMode; 3] = [PatternMode::Uniform, PatternMode::Tcm, PatternMode::Ipm];

    pub fn name(self) -> &'static str {
        match self {
            PatternMode::Uniform => "uniform",
            PatternMode::Tcm => "tcm",
            PatternMode::Ipm => "ipm",
        }
    }
}

impl std::fmt::Display for PatternMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PatternMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(PatternMode::Uniform),
            "tcm" => Ok(PatternMode::Tcm),
            "ipm" => Ok(PatternMode::Ipm),
            other => Err(Error::Config(format!("unknown pattern {other:?}"))),
        }
    }
}

/// One transmit vector per subcarrier with equal per-subcarrier power.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationPlan {
    pub vectors: Vec<Vec<c64>>,
    pub per_subcarrier_power: f64,
    pub mode: PatternMode,
    pub focus_cells: Option<Vec<Vec<usize>>>,
}

impl IlluminationPlan {
    pub fn uniform(p: f64, m_tx: usize, n_subcarriers: usize) -> Result<Self> {
        let x = uniform_pattern(p, m_tx)?;
        Ok(Self {
            vectors: vec![x; n_subcarriers],
            per_subcarrier_power: p,
            mode: PatternMode::Uniform,
            focus_cells: None,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.vectors.len()
    }

    pub fn m_tx(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn total_power(&self) -> f64 {
        self.vectors
            .iter()
            .map(|x| x.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Writes the plan as text: `#` header lines, then one row per subcarrier
    /// holding `re,im` pairs of every element.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# mode={}", self.mode).unwrap();
        writeln!(s, "# per_subcarrier_power={}", self.per_subcarrier_power).unwrap();
        if let Some(focus) = &self.focus_cells {
            for (n, cells) in focus.iter().enumerate() {
                let list: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
                writeln!(s, "# focus{n}={}", list.join(" ")).unwrap();
            }
        }
        for x in &self.vectors {
            let row: Vec<String> = x.iter().map(|v| format!("{},{}", v.re, v.im)).collect();
            writeln!(s, "{}", row.join(",")).unwrap();
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let mut mode = None;
        let mut power = None;
        let mut focus: Vec<Vec<usize>> = Vec::new();
        let mut vectors = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| perr(format!("bad header line {line:?}")))?;
                match key {
                    "mode" => mode = Some(value.parse::<PatternMode>().map_err(|e| perr(e.to_string()))?),
                    "per_subcarrier_power" => power = Some(value.parse::<f64>().map_err(|e| perr(e.to_string()))?),
                    k if k.starts_with("focus") => {
                        let cells = value
                            .split_whitespace()
                            .map(|t| t.parse::<usize>().map_err(|e| perr(e.to_string())))
                            .collect::<Result<Vec<_>>>()?;
                        focus.push(cells);
                    }
                    other => return Err(perr(format!("unknown header key {other:?}"))),
                }
                continue;
            }
            let nums = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| perr(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if nums.len() % 2 != 0 {
                return Err(perr("odd number of values in a plan row".into()));
            }
            vectors.push(nums.chunks(2).map(|p| c64::new(p[0], p[1])).collect::<Vec<_>>());
        }
        if vectors.is_empty() || vectors.iter().any(|v| v.len() != vectors[0].len()) {
            return Err(perr("plan rows missing or of unequal length".into()));
        }
        Ok(Self {
            vectors,
            per_subcarrier_power: power.ok_or_else(|| perr("missing per_subcarrier_power".into()))?,
            mode: mode.ok_or_else(|| perr("missing mode".into()))?,
            focus_cells: if focus.is_empty() { None } else { Some(focus) },
        })
    }
}

/// Power-normalized all-ones beamformer.
pub fn uniform_pattern(p: f64, m_tx: usize) -> Result<Vec<c64>> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("power must be positive, got {p}")));
    }
    if m_tx == 0 {
        return Err(Error::Parameter("m_tx must be at least 1".into()));
    }
    Ok(vec![c64::new((p / m_tx as f64).sqrt(), 0.0); m_tx])
}

/// `||Phi^H Phi - alpha^2 I||_F^2`.
pub fn total_coherence(phi: &Mat<c64>, alpha: f64) -> f64 {
    let g = phi.adjoint() * phi;
    let a2 = alpha * alpha;
    let mut s = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let v = if i == j { g[(i, j)] - a2 } else { g[(i, j)] };
            s += v.norm_sqr();
        }
    }
    s
}

/// Frobenius-optimal scaling `alpha^2 = tr(Phi^H Phi) / Q`.
pub fn fitted_alpha(phi: &Mat<c64>) -> f64 {
    (crate::linalg::frobenius_sq(phi) / phi.ncols() as f64).sqrt()
}

/// Total coherence at the fitted `alpha`, divided by `||Phi||_F^4` so that it is scale free.
pub fn relative_total_coherence(phi: &Mat<c64>) -> f64 {
    let f = crate::linalg::frobenius_sq(phi);
    if f == 0.0 {
        return 0.0;
    }
    total_coherence(phi, fitted_alpha(phi)) / (f * f)
}

/// Total coherence (at `alpha = 1`) of `Phi` with every non-zero column scaled to unit norm.
pub fn column_normalized_total_coherence(phi: &Mat<c64>) -> f64 {
    let mut p = phi.clone();
    for j in 0..p.ncols() {
        let n: f64 = (0..p.nrows()).map(|i| p[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for i in 0..p.nrows() {
                p[(i, j)] /= n;
            }
        }
    }
    total_coherence(&p, 1.0)
}

/// Illuminated power `eta_i^2 |b_i^H x|^2` of every listed cell.
pub fn illumination_powers(x: &[c64], tables: &ChannelTables, cells: &[usize]) -> Result<Vec<f64>> {
    if x.len() != tables.m_tx() {
        return Err(Error::dim("beamformer length", tables.m_tx(), x.len()));
    }
    cells
        .iter()
        .map(|&i| {
            if i >= tables.n_cells() {
                return Err(Error::Index {
                    index: i,
                    len: tables.n_cells(),
                });
            }
            let bx: c64 = (0..x.len()).map(|m| tables.b_matrix[(i, m)] * x[m]).sum();
            Ok(tables.eta[i] * tables.eta[i] * bx.norm_sqr())
        })
        .collect()
}

/// Minimum of [`illumination_powers`] over a non-empty subset.
pub fn min_illumination_power(x: &[c64], tables: &ChannelTables, cells: &[usize]) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::Parameter("cell subset is empty".into()));
    }
    Ok(illumination_powers(x, tables, cells)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// The four ROI quadrants (top-left, top-right, bottom-left, bottom-right).
pub fn quadrant_cells(cells_per_side: usize) -> Vec<Vec<usize>> {
    let h = cells_per_side / 2;
    let mut out = vec![Vec::new(); 4];
    for r in 0..cells_per_side {
        for c in 0..cells_per_side {
            let k = usize::from(r >= h) * 2 + usize::from(c >= h);
            out[k].push(r * cells_per_side + c);
        }
    }
    out
}

/// How cells are assigned to subcarriers when designing focused patterns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusSets {
    /// Quadrant `n` for subcarrier `n` when there are four subcarriers, the full ROI otherwise.
    #[default]
    Quadrants,
    /// Every subcarrier covers the full ROI.
    Full,
    /// Explicit cell lists, one per subcarrier.
    Custom(Vec<Vec<usize>>),
}

impl FocusSets {
    pub fn resolve(&self, cells_per_side: usize, n_subcarriers: usize) -> Result<Vec<Vec<usize>>> {
        let q = cells_per_side * cells_per_side;
        let sets = match self {
            FocusSets::Quadrants if n_subcarriers == 4 && cells_per_side >= 2 => quadrant_cells(cells_per_side),
            FocusSets::Quadrants | FocusSets::Full => vec![(0..q).collect(); n_subcarriers],
            FocusSets::Custom(sets) => {
                if sets.len() != n_subcarriers {
                    return Err(Error::dim("focus sets", n_subcarriers, sets.len()));
                }
                sets.clone()
            }
        };
        for s in &sets {
            if s.is_empty() {
                return Err(Error::Config("focus set is empty".into()));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= q) {
                return Err(Error::Index { index: bad, len: q });
            }
        }
        Ok(sets)
    }
}

/// Designs a TCM plan, one pattern (and diagnostics entry) per subcarrier focus set.
pub fn tcm_plan(
    tables: &ChannelTables,
    p: f64,
    focus: &[Vec<usize>],
    opts: &TcmOptions,
) -> Result<(IlluminationPlan, Vec<TcmDiagnostics>)> {
    design_plan(PatternMode::Tcm, p, focus, |cells| tcm_pattern(tables, p, cells, opts))
}

/// Designs an IPM plan, one pattern per subcarrier focus set.
pub fn ipm_plan(
    tables: &ChannelTables,
    p: f64,
    focus: &[Vec<usize>],
    opts: &IpmOptions,
) -> Result<(IlluminationPlan, Vec<IpmDiagnostics>)> {
    design_plan(PatternMode::Ipm, p, focus, |cells| ipm_pattern(tables, p, cells, opts))
}

fn design_plan<D>(
    mode: PatternMode,
    p: f64,
    focus: &[Vec<usize>],
    design: impl Fn(&[usize]) -> Result<(Vec<c64>, D)> + Sync,
) -> Result<(IlluminationPlan, Vec<D>)>
where
    D: Send + Clone,
{
    use rayon::prelude::*;
    // Identical focus sets share one design.
    let mut unique: Vec<&Vec<usize>> = Vec::new();
    for f in focus {
        if !unique.contains(&f) {
            unique.push(f);
        }
    }
    let designs: Vec<(Vec<c64>, D)> = unique.par_iter().map(|cells| design(cells)).collect::<Result<_>>()?;
    let mut vectors = Vec::with_capacity(focus.len());
    let mut diags = Vec::with_capacity(focus.len());
    for f in focus {
        let k = unique.iter().position(|u| *u == f).unwrap();
        vectors.push(designs[k].0.clone());
        diags.push(designs[k].1.clone());
    }
    Ok((
        IlluminationPlan {
            vectors,
            per_subcarrier_power: p,
            mode,
            focus_cells: Some(focus.to_vec()),
        },
        diags,
    ))
}
