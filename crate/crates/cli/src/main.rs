//! `doqkd`: secret-key capacity, sweeps, heralding curves, and frame-level
//! simulation for a dispersive-optics high-dimensional QKD link.
//!
//! Exit codes: 0 success, 1 usage/config/runtime error, 2 security abort
//! (Delta I <= 0 from the `capacity` command).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "doqkd",
    version,
    about = "Secret-key capacity engine and Monte Carlo simulator for dispersive-optics high-dimensional QKD"
)]
struct Cli {
    /// Parameter file (INI-style sections or a JSON object).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path; stdout when omitted (simulate requires it).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the rate convention.
    #[arg(long, global = true, value_enum)]
    convention: Option<ConventionArg>,

    /// Override the per-dimension scaling rule for sweeps.
    #[arg(long, global = true, value_enum)]
    scaling: Option<ScalingArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    Paper,
    Strict,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScalingArg {
    FixedCoh,
    FixedCor,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Worst-case secret-key capacity and rate at one operating point.
    Capacity,
    /// Capacity and rate versus channel length, per dimension.
    SweepLength,
    /// Worst-case capacity versus the measured noise offset sigma_delta.
    SweepNoise,
    /// Heralded-source photon statistics and operating points.
    Herald,
    /// Frame-level Monte Carlo run with noise estimation and closure report.
    Simulate {
        /// Where to write the closure report (stdout when omitted).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are successes, not usage errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(conv) = cli.convention {
        cfg.security.convention = match conv {
            ConventionArg::Paper => "paper",
            ConventionArg::Strict => "strict",
        }
        .to_owned();
    }
    if let Some(scaling) = cli.scaling {
        cfg.sweep.scaling = match scaling {
            ScalingArg::FixedCoh => "fixed-coh",
            ScalingArg::FixedCor => "fixed-cor",
        }
        .to_owned();
    }

    let out = cli.out.as_deref();
    match cli.command {
        Command::Capacity => commands::capacity(&cfg, out),
        Command::SweepLength => commands::sweep_length(&cfg, out),
        Command::SweepNoise => commands::sweep_noise(&cfg, out),
        Command::Herald => commands::herald(&cfg, out),
        Command::Simulate { summary } => {
            let out = out.ok_or_else(|| {
                anyhow::anyhow!("simulate writes an outcome CSV; pass --out <path>")
            })?;
            commands::simulate(&cfg, out, summary.as_deref())
        }
    }
}
