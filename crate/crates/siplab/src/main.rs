use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use siplab::checkpoint;
use siplab::commands;
use siplab::config::{self, RunConfig};
use siplab::{LabError, Result};
use sipcore::presets;

/// Superimposed-pilot MIMO-OFDM link laboratory.
#[derive(Debug, Parser)]
#[command(name = "siplab", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation, training and sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Preset: tiny, desk or paper (overrides the config file).
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a channel dataset (`dataset.sipds`).
    GenData,
    /// Train the link; writes `metrics.csv`, `best.sipckpt` and `last.sipckpt`.
    Train {
        /// Dataset file; generated from the preset when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sweep schemes over Es/sigma^2 on the test split; writes `sweep.csv` and plots.
    EvalSweep {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint for the CaSIP scheme.
        #[arg(long)]
        casip: Option<PathBuf>,
        /// Checkpoint for the SIPCE ablation scheme.
        #[arg(long)]
        sipce: Option<PathBuf>,
    },
    /// Region statistics and heat map of a checkpoint's PDP factors.
    PdpReport {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Compare autodiff gradients with finite differences.
    GradCheck {
        #[arg(long, default_value_t = 32)]
        coords: usize,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Print a checkpoint summary.
    InspectCkpt { ckpt: PathBuf },
    /// Plot an existing sweep table.
    Plot { csv: PathBuf },
}

fn run_config(cli: &Cli, default_preset: &str) -> Result<RunConfig> {
    let preset = cli.preset.as_deref();
    match &cli.config {
        Some(path) => config::load(path, preset),
        None => {
            let p = presets::by_name(preset.unwrap_or(default_preset))
                .map_err(|e| LabError::config(e.to_string()))?;
            Ok(RunConfig::from_preset(p))
        }
    }
}

/// Returns whether the command's own check passed.
fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::GenData => {
            let cfg = run_config(cli, "desk")?;
            let path = commands::gen_data_to(&cfg, cli.seed.unwrap_or(0), &cli.out)?;
            println!("{}", path.display());
        }
        Command::Train { data } => {
            let mut cfg = run_config(cli, "desk")?;
            if let Some(seed) = cli.seed {
                cfg.preset.train.seed = seed;
            }
            let ds = commands::resolve_dataset(&cfg, data.as_deref(), cfg.preset.train.seed)?;
            let s = commands::train_run(&cfg, &ds, Some(&cli.out))?;
            let last = s.history.last().expect("at least one epoch");
            println!(
                "trained {} epochs: final train loss {:.6}, best epoch {} (val loss {:.6})",
                last.epoch,
                last.train_loss,
                s.best.epoch,
                s.history[s.best.epoch - 1].val_loss
            );
        }
        Command::EvalSweep { data, casip, sipce } => {
            let cfg = run_config(cli, "desk")?;
            let seed = cli.seed.unwrap_or(0);
            let ds = commands::resolve_dataset(&cfg, data.as_deref(), seed)?;
            let casip = casip.as_deref().map(checkpoint::load).transpose()?;
            let sipce = sipce.as_deref().map(checkpoint::load).transpose()?;
            let (rows, files) = commands::sweep_to(&cfg, &ds, casip.as_ref(), sipce.as_ref(), seed, &cli.out)?;
            for r in &rows {
                println!(
                    "{:<15} {:>6.1} dB  NMSE {:>8.2} dB  MSE {:.4}  SER {:.4}  BER {:.4}",
                    r.scheme, r.snr_db, r.nmse_db, r.symbol_mse, r.ser, r.ber
                );
            }
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::PdpReport { ckpt } => {
            let ck = checkpoint::load(ckpt)?;
            let (reports, files) = commands::pdp_report_to(&ck, &cli.out)?;
            print!("{}", commands::format_pdp(&reports));
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::GradCheck { coords, step, tol } => {
            let cfg = run_config(cli, "tiny")?;
            let report = commands::grad_check_run(&cfg, cli.seed.unwrap_or(0), *coords, *step)?;
            let mut ok = true;
            for g in &report.groups {
                let pass = g.max_rel_error <= *tol;
                ok &= pass;
                println!(
                    "{:<4} {:>3} coords  max rel error {:.3e}  step refinements {}  {}",
                    g.group,
                    g.coords,
                    g.max_rel_error,
                    g.refined,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            return Ok(ok);
        }
        Command::InspectCkpt { ckpt } => print!("{}", commands::describe_checkpoint(&checkpoint::load(ckpt)?)),
        Command::Plot { csv } => {
            let rows = siplab::tables::load_sweep(csv)?;
            std::fs::create_dir_all(&cli.out).map_err(|e| LabError::io(&cli.out, e))?;
            for f in siplab::plots::plot_sweep(&rows, &cli.out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
