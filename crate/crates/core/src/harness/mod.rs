//! Experiment driver: config parsing, the (pattern, SNR, seed) sweep and its
//! on-disk outputs.
//!
//! Output layout under `output_dir`:
//! - `resolved_config.toml`: the effective config, re-parseable.
//! - `metrics.csv`: one row per cell and subcarrier plus a `mean` row per cell.
//! - `summary.csv`: median and mean of the per-cell means, grouped by pattern and SNR.
//! - `plans/<pattern>.txt`: the illumination plans used.
//! - `images/`: truth and estimate PNGs with CSV sidecars.
//! - `diagnostics/`: pattern quality, design traces and per-cell SBL traces.

mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{ExperimentConfig, IlluminationConfig, OutputConfig, Overrides, SceneConfig};
pub use output::{emit_image, load_image_csv};

use crate::forward::{calibrate_noise_power, coefficient_vectors, synthesize_observations, SensingSet};
use crate::geometry::{build_channel_tables, build_geometry, ChannelTables};
use crate::grid::Image;
use crate::illum::{
    column_normalized_total_coherence, ipm_plan, min_illumination_power, relative_total_coherence, tcm_plan,
    IlluminationPlan, IpmDiagnostics, PatternMode, TcmDiagnostics,
};
use crate::metrics::{evaluate, MetricReport, MetricRow};
use crate::sbl::{run_sbl, SblDiagnostics};
use crate::scene::{generate_scene, render_bitmap, scene_to_images, GroundTruthScene};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub pattern: PatternMode,
    pub snr_db: f64,
    pub seed: u64,
}

impl CellKey {
    fn stem(&self) -> String {
        format!("{}_snr{}_seed{}", self.pattern, self.snr_db, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// The truth image is all zero, so normalized metrics are undefined.
    Degenerate,
    Failed,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Degenerate => "degenerate",
            CellStatus::Failed => "error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub status: CellStatus,
    pub error: Option<String>,
    pub report: Option<MetricReport>,
    pub noise_power: Option<f64>,
    pub sbl_iterations: usize,
    pub sbl_converged: bool,
    /// Final AR-1 coefficient estimate.
    pub psi_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub pattern: PatternMode,
    pub snr_db: f64,
    pub n_cells: usize,
    pub n_ok: usize,
    pub median: Option<MetricRow>,
    pub mean: Option<MetricRow>,
}

/// Quality of one designed pattern on one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternStats {
    pub pattern: PatternMode,
    pub subcarrier: usize,
    pub relative_coherence: f64,
    pub column_normalized_coherence: f64,
    /// Minimum illuminated power over the subcarrier's focus set (whole ROI for uniform).
    pub min_power_focus: f64,
    pub min_power_roi: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub patterns: Vec<PatternStats>,
    pub output_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status != CellStatus::Ok).count()
    }

    pub fn row(&self, pattern: PatternMode, snr_db: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.pattern == pattern && r.snr_db == snr_db)
    }
}

enum DesignInfo {
    None,
    Tcm(Vec<TcmDiagnostics>),
    Ipm(Vec<IpmDiagnostics>),
}

struct Designed {
    plan: IlluminationPlan,
    info: DesignInfo,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed for a (seed, SNR) pair. Patterns share it, so their comparison
/// at a given seed and SNR sees the same noise realization.
pub fn noise_seed(seed: u64, snr_db: f64) -> u64 {
    splitmix64(seed ^ splitmix64(snr_db.to_bits()))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn design(config: &ExperimentConfig, tables: &ChannelTables, mode: PatternMode) -> Result<Designed> {
    let p = config.per_subcarrier_power();
    let n = config.geometry.n_subcarriers;
    if let Some(dir) = &config.illumination.plan_dir {
        let path = dir.join(format!("{mode}.txt"));
        if path.exists() {
            let plan = IlluminationPlan::load(&path)?;
            if plan.mode != mode || plan.n_subcarriers() != n || plan.m_tx() != tables.m_tx() {
                return Err(Error::Config(format!(
                    "cached plan {} does not match the configured geometry or pattern",
                    path.display()
                )));
            }
            if ((plan.per_subcarrier_power - p) / p).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "cached plan {} has power {} instead of {p}",
                    path.display(),
                    plan.per_subcarrier_power
                )));
            }
            log::info!("loaded {mode} plan from {}", path.display());
            return Ok(Designed {
                plan,
                info: DesignInfo::None,
            });
        }
    }
    let side = config.geometry.cells_per_side;
    Ok(match mode {
        PatternMode::Uniform => Designed {
            plan: IlluminationPlan::uniform(p, tables.m_tx(), n)?,
            info: DesignInfo::None,
        },
        PatternMode::Tcm => {
            let focus = config.illumination.focus.resolve(side, n)?;
            let (plan, d) = tcm_plan(tables, p, &focus, &config.illumination.tcm)?;
            Designed {
                plan,
                info: DesignInfo::Tcm(d),
            }
        }
        PatternMode::Ipm => {
            let focus = config.illumination.focus.resolve(side, n)?;
            let (plan, d) = ipm_plan(tables, p, &focus, &config.illumination.ipm)?;
            for (k, di) in d.iter().enumerate() {
                if !di.converged {
                    log::warn!("IPM design for subcarrier {k} did not reach a rank-one solution");
                }
            }
            Designed {
                plan,
                info: DesignInfo::Ipm(d),
            }
        }
    })
}

fn pattern_stats(tables: &ChannelTables, plan: &IlluminationPlan) -> Result<Vec<PatternStats>> {
    let sensing = SensingSet::new(tables, plan)?;
    let all: Vec<usize> = (0..tables.n_cells()).collect();
    (0..plan.n_subcarriers())
        .map(|k| {
            let focus = plan.focus_cells.as_ref().map(|f| f[k].as_slice()).unwrap_or(&all);
            Ok(PatternStats {
                pattern: plan.mode,
                subcarrier: k,
                relative_coherence: relative_total_coherence(&sensing.phi[k]),
                column_normalized_coherence: column_normalized_total_coherence(&sensing.phi[k]),
                min_power_focus: min_illumination_power(&plan.vectors[k], tables, focus)?,
                min_power_roi: min_illumination_power(&plan.vectors[k], tables, &all)?,
            })
        })
        .collect()
}

struct CellContext<'a> {
    config: &'a ExperimentConfig,
    tables: &'a ChannelTables,
    uniform: &'a IlluminationPlan,
    out: &'a Path,
}

struct CellOutput {
    result: CellResult,
    images: Vec<Image>,
    sbl: Option<(SblDiagnostics, Vec<f64>, Vec<f64>)>,
}

fn run_cell(
    ctx: &CellContext,
    key: CellKey,
    sensing: &SensingSet,
    scene: &GroundTruthScene,
    truth: &[Image],
) -> Result<CellOutput> {
    let n0 = calibrate_noise_power(ctx.tables, scene, ctx.uniform, key.snr_db)?;
    let u = coefficient_vectors(scene, ctx.tables)?;
    let mut obs = synthesize_observations(sensing, &u, n0, noise_seed(key.seed, key.snr_db))?;
    obs.snr_db = Some(key.snr_db);
    if ctx.config.output.observations {
        let dir = ctx.out.join("observations");
        obs.save_csv(&dir.join(format!("{}.csv", key.stem())))?;
    }
    let sbl = run_sbl(&obs, sensing, &ctx.tables.delay_phases, &ctx.config.solver)?;
    if !sbl.diagnostics.converged {
        log::warn!("{}: SBL stopped at the iteration cap", key.stem());
    }
    let report = evaluate(truth, &sbl.images, &ctx.config.metrics)?;
    Ok(CellOutput {
        result: CellResult {
            key,
            status: CellStatus::Ok,
            error: None,
            report: Some(report),
            noise_power: Some(n0),
            sbl_iterations: sbl.state.iteration,
            sbl_converged: sbl.diagnostics.converged,
            psi_estimate: sbl.diagnostics.psi_trace.last().copied(),
        },
        images: sbl.images,
        sbl: Some((sbl.diagnostics, sbl.state.evidence, sbl.state.gamma)),
    })
}

fn failed(key: CellKey, e: &Error) -> CellOutput {
    let status = match e {
        Error::Degenerate(_) | Error::Calibration(_) => CellStatus::Degenerate,
        _ => CellStatus::Failed,
    };
    log::error!("{}: {e}", key.stem());
    CellOutput {
        result: CellResult {
            key,
            status,
            error: Some(e.to_string()),
            report: None,
            noise_power: None,
            sbl_iterations: 0,
            sbl_converged: false,
            psi_estimate: None,
        },
        images: Vec::new(),
        sbl: None,
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn aggregate(rows: &[MetricRow], reduce: fn(&mut [f64]) -> f64) -> Option<MetricRow> {
    if rows.is_empty() {
        return None;
    }
    let field = |f: fn(&MetricRow) -> f64| reduce(&mut rows.iter().map(f).collect::<Vec<_>>());
    let mut pccs: Vec<f64> = rows.iter().filter_map(|r| r.pcc).collect();
    Some(MetricRow {
        immse: field(|r| r.immse),
        psnr_db: field(|r| r.psnr_db),
        ssim: field(|r| r.ssim),
        pcc: (!pccs.is_empty()).then(|| reduce(&mut pccs)),
    })
}

fn mean(v: &mut [f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(config: &ExperimentConfig, cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &pattern in &config.patterns {
        for &snr_db in &config.snr_db {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.key.pattern == pattern && c.key.snr_db == snr_db)
                .collect();
            let ok: Vec<MetricRow> = group.iter().filter_map(|c| c.report.as_ref().map(|r| r.mean)).collect();
            out.push(SummaryRow {
                pattern,
                snr_db,
                n_cells: group.len(),
                n_ok: ok.len(),
                median: aggregate(&ok, median),
                mean: aggregate(&ok, mean),
            });
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_metrics(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "pattern",
        "snr_db",
        "seed",
        "subcarrier",
        "immse",
        "psnr_db",
        "ssim",
        "pcc",
        "status",
        "error",
    ])
    .map_err(|e| csv_err(path, e))?;
    for c in cells {
        let head = [
            c.key.pattern.to_string(),
            c.key.snr_db.to_string(),
            c.key.seed.to_string(),
        ];
        let mut rows: Vec<(String, Option<MetricRow>)> = Vec::new();
        match &c.report {
            Some(r) => {
                rows.extend(
                    r.per_subcarrier
                        .iter()
                        .enumerate()
                        .map(|(k, m)| (k.to_string(), Some(*m))),
                );
                rows.push(("mean".into(), Some(r.mean)));
            }
            None => rows.push(("mean".into(), None)),
        }
        for (sub, m) in rows {
            let vals = match m {
                Some(m) => [
                    m.immse.to_string(),
                    m.psnr_db.to_string(),
                    m.ssim.to_string(),
                    opt(m.pcc),
                ],
                None => Default::default(),
            };
            let mut rec: Vec<String> = head.to_vec();
            rec.push(sub);
            rec.extend(vals);
            rec.push(c.status.name().into());
            rec.push(c.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "pattern",
        "snr_db",
        "n_cells",
        "n_ok",
        "psnr_db_median",
        "ssim_median",
        "immse_median",
        "pcc_median",
        "psnr_db_mean",
        "ssim_mean",
        "immse_mean",
        "pcc_mean",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.pattern.to_string(),
            r.snr_db.to_string(),
            r.n_cells.to_string(),
            r.n_ok.to_string(),
        ];
        for m in [&r.median, &r.mean] {
            match m {
                Some(m) => rec.extend([
                    m.psnr_db.to_string(),
                    m.ssim.to_string(),
                    m.immse.to_string(),
                    opt(m.pcc),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_design_diagnostics(dir: &Path, designs: &[(PatternMode, Designed)], stats: &[PatternStats]) -> Result<()> {
    let mut s = String::from(
        "pattern,subcarrier,relative_coherence,column_normalized_coherence,min_power_focus,min_power_roi\n",
    );
    for p in stats {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            p.pattern,
            p.subcarrier,
            p.relative_coherence,
            p.column_normalized_coherence,
            p.min_power_focus,
            p.min_power_roi
        )
        .unwrap();
    }
    write_text(&dir.join("patterns.csv"), &s)?;
    for (mode, d) in designs {
        match &d.info {
            DesignInfo::Tcm(diags) => {
                let mut s = String::from("subcarrier,pass,relative_coherence,selected\n");
                for (k, di) in diags.iter().enumerate() {
                    for (pass, c) in di.coherence_trace.iter().enumerate() {
                        writeln!(s, "{k},{pass},{c},{}", u8::from(pass == di.selected_pass)).unwrap();
                    }
                }
                write_text(&dir.join(format!("design_{mode}.csv")), &s)?;
            }
            DesignInfo::Ipm(diags) => {
                let mut s = String::from("subcarrier,sca_iter,chi,rank_residual,sdp_iterations,eps,converged\n");
                for (k, di) in diags.iter().enumerate() {
                    writeln!(s, "{k},relaxation,{},,,{},{}", di.relaxation_chi, di.eps, di.converged).unwrap();
                    for (it, (chi, rr)) in di.chi_trace.iter().zip(&di.rank_residuals).enumerate() {
                        let sdp = di.sdp_iterations.get(it + 1).map(|v| v.to_string()).unwrap_or_default();
                        writeln!(s, "{k},{it},{chi},{rr},{sdp},{},{}", di.eps, di.converged).unwrap();
                    }
                }
                write_text(&dir.join(format!("design_{mode}.csv")), &s)?;
            }
            DesignInfo::None => {}
        }
    }
    Ok(())
}

fn write_sbl_trace(dir: &Path, key: &CellKey, diag: &SblDiagnostics, evidence: &[f64], gamma: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,evidence,psi,gamma_change\n");
    for (it, ev) in evidence.iter().enumerate() {
        writeln!(
            s,
            "{it},{ev},{},{}",
            opt(diag.psi_trace.get(it).copied()),
            opt(diag.gamma_change.get(it).copied())
        )
        .unwrap();
    }
    write_text(&dir.join(format!("sbl_{}.csv", key.stem())), &s)?;
    let mut g = String::from("cell,gamma\n");
    for (i, v) in gamma.iter().enumerate() {
        writeln!(g, "{i},{v}").unwrap();
    }
    write_text(&dir.join(format!("gamma_{}.csv", key.stem())), &g)
}

/// Runs the full sweep. Config errors abort before any work; failures inside a
/// cell become error rows. Outputs depend only on the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = config.output_dir.clone();
    mkdir(&out)?;
    for sub in ["plans", "images", "diagnostics", "observations"] {
        let enabled = match sub {
            "images" => config.output.images,
            "diagnostics" => config.output.diagnostics,
            "observations" => config.output.observations,
            _ => true,
        };
        if enabled {
            mkdir(&out.join(sub))?;
        }
    }
    write_text(&out.join("resolved_config.toml"), &config.to_toml_string()?)?;

    let geometry = build_geometry(&config.geometry)?;
    let tables = build_channel_tables(&geometry)?;
    let raster = config.scene.load_raster()?;
    let (mask, mags) = render_bitmap(&raster, geometry.cells_per_side, config.scene.magnitude)?;

    let uniform = design(config, &tables, PatternMode::Uniform)?.plan;
    let mut designs: Vec<(PatternMode, Designed)> = Vec::new();
    let mut design_errors: Vec<(PatternMode, Error)> = Vec::new();
    for &mode in &config.patterns {
        log::info!("designing {mode} illumination");
        match design(config, &tables, mode) {
            Ok(d) => {
                d.plan.save(&out.join("plans").join(format!("{mode}.txt")))?;
                designs.push((mode, d));
            }
            Err(e) => {
                log::error!("{mode} design failed: {e}");
                design_errors.push((mode, e));
            }
        }
    }
    let mut stats = Vec::new();
    for (_, d) in &designs {
        stats.extend(pattern_stats(&tables, &d.plan)?);
    }
    if config.output.diagnostics {
        write_design_diagnostics(&out.join("diagnostics"), &designs, &stats)?;
    }

    let scenes: Vec<Result<(GroundTruthScene, Vec<Image>)>> = config
        .seeds
        .iter()
        .map(|&seed| {
            let s = generate_scene(
                &mask,
                &mags,
                geometry.n_subcarriers,
                config.scene.psi,
                seed,
                config.scene.first_column,
            )?;
            let imgs = scene_to_images(&s);
            Ok((s, imgs))
        })
        .collect();
    if config.output.images {
        for (seed, s) in config.seeds.iter().zip(&scenes) {
            if let Ok((_, imgs)) = s {
                for (k, im) in imgs.iter().enumerate() {
                    emit_image(im, &out.join("images").join(format!("truth_seed{seed}_sc{k}.png")))?;
                }
            }
        }
    }

    let sensing: Vec<(PatternMode, Result<SensingSet>)> = designs
        .iter()
        .map(|(m, d)| (*m, SensingSet::new(&tables, &d.plan)))
        .collect();
    let ctx = CellContext {
        config,
        tables: &tables,
        uniform: &uniform,
        out: &out,
    };
    let mut keys = Vec::new();
    for &pattern in &config.patterns {
        for &snr_db in &config.snr_db {
            for &seed in &config.seeds {
                keys.push(CellKey { pattern, snr_db, seed });
            }
        }
    }
    let outputs: Vec<CellOutput> = keys
        .par_iter()
        .map(|&key| {
            if let Some((_, e)) = design_errors.iter().find(|(m, _)| *m == key.pattern) {
                return failed(key, &Error::Design(format!("{} design failed: {e}", key.pattern)));
            }
            let sensing = match sensing.iter().find(|(m, _)| *m == key.pattern).map(|(_, s)| s) {
                Some(Ok(s)) => s,
                Some(Err(e)) => return failed(key, e),
                None => unreachable!("every pattern is designed or failed"),
            };
            let seed_idx = config.seeds.iter().position(|&s| s == key.seed).unwrap();
            let (scene, truth) = match &scenes[seed_idx] {
                Ok(s) => s,
                Err(e) => return failed(key, e),
            };
            log::debug!("running {}", key.stem());
            run_cell(&ctx, key, sensing, scene, truth).unwrap_or_else(|e| failed(key, &e))
        })
        .collect();

    for o in &outputs {
        let key = &o.result.key;
        if config.output.images {
            for (k, im) in o.images.iter().enumerate() {
                emit_image(im, &out.join("images").join(format!("{}_sc{k}.png", key.stem())))?;
            }
        }
        if config.output.diagnostics {
            if let Some((d, ev, g)) = &o.sbl {
                write_sbl_trace(&out.join("diagnostics"), key, d, ev, g)?;
            }
        }
    }
    let cells: Vec<CellResult> = outputs.into_iter().map(|o| o.result).collect();
    write_metrics(&out.join("metrics.csv"), &cells)?;
    let summary = summarize(config, &cells);
    write_summary(&out.join("summary.csv"), &summary)?;
    Ok(ExperimentSummary {
        cells,
        summary,
        patterns: stats,
        output_dir: out,
    })
}
