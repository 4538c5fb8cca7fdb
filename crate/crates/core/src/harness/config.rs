use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::{build_geometry, GeometryConfig};
use crate::illum::{FocusSets, IpmOptions, PatternMode, TcmOptions};
use crate::metrics::SsimParams;
use crate::sbl::SblOptions;
use crate::scene::{FirstColumn, MagnitudeProfile, Raster};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Name of a bundled raster.
    pub raster: String,
    /// Plain-text 0/1 raster file; takes precedence over `raster`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raster_file: Option<PathBuf>,
    /// AR-1 correlation coefficient across subcarriers.
    pub psi: f64,
    pub first_column: FirstColumn,
    pub magnitude: MagnitudeProfile,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            raster: "tu_berlin".into(),
            raster_file: None,
            psi: 0.99,
            first_column: FirstColumn::default(),
            magnitude: MagnitudeProfile::default(),
        }
    }
}

impl SceneConfig {
    pub fn load_raster(&self) -> Result<Raster> {
        match &self.raster_file {
            Some(path) => Raster::load(path),
            None => Raster::builtin(&self.raster),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlluminationConfig {
    pub focus: FocusSets,
    /// Directory with cached plans named `<pattern>.txt`; missing files are designed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_dir: Option<PathBuf>,
    pub tcm: TcmOptions,
    pub ipm: IpmOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write PNG images and their CSV sidecars.
    pub images: bool,
    /// Write per-cell solver traces.
    pub diagnostics: bool,
    /// Dump the synthesized observations of every cell.
    pub observations: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            images: true,
            diagnostics: true,
            observations: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Total transmit power, split equally over subcarriers.
    pub total_power: f64,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub patterns: Vec<PatternMode>,
    pub geometry: GeometryConfig,
    pub scene: SceneConfig,
    pub illumination: IlluminationConfig,
    pub solver: SblOptions,
    pub metrics: SsimParams,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            total_power: 1.0,
            snr_db: vec![30.0, 5.0],
            seeds: vec![0, 1, 2, 3, 4],
            patterns: PatternMode::ALL.to_vec(),
            geometry: GeometryConfig::default(),
            scene: SceneConfig::default(),
            illumination: IlluminationConfig::default(),
            solver: SblOptions::default(),
            metrics: SsimParams::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub patterns: Vec<PatternMode>,
    pub snr_db: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn per_subcarrier_power(&self) -> f64 {
        self.total_power / self.geometry.n_subcarriers as f64
    }

    /// Filters restrict the configured lists; values absent from the config are rejected.
    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if !o.patterns.is_empty() {
            if let Some(p) = o.patterns.iter().find(|p| !self.patterns.contains(p)) {
                return Err(Error::Config(format!("pattern {p} is not in the config")));
            }
            self.patterns.retain(|p| o.patterns.contains(p));
        }
        if !o.snr_db.is_empty() {
            if let Some(s) = o.snr_db.iter().find(|s| !self.snr_db.contains(s)) {
                return Err(Error::Config(format!("SNR {s} dB is not in the config")));
            }
            self.snr_db.retain(|s| o.snr_db.contains(s));
        }
        Ok(())
    }

    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return bad(format!("total_power must be positive, got {}", self.total_power));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.patterns.is_empty() {
            return bad("patterns must not be empty".into());
        }
        for (i, p) in self.patterns.iter().enumerate() {
            if self.patterns[..i].contains(p) {
                return bad(format!("pattern {p} listed twice"));
            }
        }
        for (i, s) in self.snr_db.iter().enumerate() {
            if self.snr_db[..i].contains(s) {
                return bad(format!("SNR {s} listed twice"));
            }
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return bad(format!("seed {s} listed twice"));
            }
        }
        let g = build_geometry(&self.geometry)?;
        if !(self.scene.psi.abs() < 1.0) {
            return bad(format!("scene.psi must satisfy |psi| < 1, got {}", self.scene.psi));
        }
        let raster = self.scene.load_raster()?;
        if raster.side() != g.cells_per_side {
            return bad(format!(
                "raster is {}x{} but the grid has {} cells per side",
                raster.side(),
                raster.side(),
                g.cells_per_side
            ));
        }
        let m = &self.scene.magnitude;
        if !(m.top > 0.0 && m.bottom > 0.0 && m.top.is_finite() && m.bottom.is_finite()) {
            return bad("scene.magnitude endpoints must be positive".into());
        }
        self.illumination.focus.resolve(g.cells_per_side, g.n_subcarriers)?;
        let t = &self.illumination.tcm;
        if !(t.rcond >= 0.0 && t.rcond < 1.0) {
            return bad(format!("illumination.tcm.rcond must lie in [0, 1), got {}", t.rcond));
        }
        let ipm = &self.illumination.ipm;
        if ipm.max_sca_iter == 0 || !(ipm.eps_rel > 0.0) || !(ipm.rel_change > 0.0) {
            return bad("illumination.ipm needs max_sca_iter >= 1 and positive eps_rel, rel_change".into());
        }
        if ipm.sdp.max_iter == 0 || !(ipm.sdp.tol > 0.0) || !(ipm.sdp.gap_tol > 0.0) || !(ipm.sdp.chi_guard > 0.0) {
            return bad("illumination.ipm.sdp tolerances must be positive".into());
        }
        let s = &self.solver;
        if s.max_iter == 0 || !(s.tol >= 0.0) || !(s.gamma_floor_rel > 0.0 && s.gamma_floor_rel < 1.0) {
            return bad("solver needs max_iter >= 1, tol >= 0 and 0 < gamma_floor_rel < 1".into());
        }
        let p = &self.metrics;
        if !(p.sigma > 0.0 && p.peak > 0.0 && p.k1 >= 0.0 && p.k2 >= 0.0) {
            return bad("metrics parameters must be positive".into());
        }
        Ok(())
    }
}
