use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use nfimg::harness::{run_experiment, ExperimentConfig, Overrides};
use nfimg::illum::PatternMode;

/// Runs a near-field imaging experiment sweep and writes images, metrics and diagnostics.
#[derive(Debug, Parser)]
#[command(name = "nfimg", version)]
struct Args {
    /// Scenario config (TOML). Without it the built-in default scenario runs.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run only these patterns (repeatable): uniform, tcm, ipm.
    #[arg(short, long = "pattern")]
    patterns: Vec<PatternMode>,
    /// Run only these SNRs in dB (repeatable).
    #[arg(short, long = "snr", allow_negative_numbers = true)]
    snr: Vec<f64>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, conflicts_with = "quiet")]
    verbose: u8,
    /// Errors only.
    #[arg(short, long)]
    quiet: bool,
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.apply_overrides(&Overrides {
        output_dir: args.out.clone(),
        seed: args.seed,
        patterns: args.patterns.clone(),
        snr_db: args.snr.clone(),
    })?;
    config.validate()?;
    if args.dry_run {
        print!("{}", config.to_toml_string()?);
        return Ok(true);
    }
    let summary = run_experiment(&config).context("experiment failed")?;
    println!("pattern  snr_db  ok/total  psnr_db  ssim    immse     pcc");
    for r in &summary.summary {
        match &r.median {
            Some(m) => println!(
                "{:<8} {:>6}  {:>2}/{:<5}  {:>7.2}  {:.4}  {:.3e}  {}",
                r.pattern.to_string(),
                r.snr_db,
                r.n_ok,
                r.n_cells,
                m.psnr_db,
                m.ssim,
                m.immse,
                m.pcc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
            ),
            None => println!(
                "{:<8} {:>6}  {:>2}/{:<5}  (no successful cells)",
                r.pattern.to_string(),
                r.snr_db,
                r.n_ok,
                r.n_cells
            ),
        }
    }
    println!("outputs in {}", summary.output_dir.display());
    let failed = summary.n_failed();
    if failed > 0 {
        log::error!("{failed} of {} cells failed", summary.cells.len());
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match (args.quiet, args.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
