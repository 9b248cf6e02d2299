// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Batch front end. Each subcommand reads one JSON config, applies
//! `--set` overrides and writes hash-named artifacts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Artifacts;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] heqsim::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            // the config asked for something the model rejects
            CliError::Numerical(heqsim::Error::InvalidInput(_) | heqsim::Error::TooManyQubits { .. }) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "heqsim", version, about = "Electrons-on-helium qubit experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); all defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value by dotted path, e.g. device.B_T=1.5 (last wins).
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory; replaces the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Stark spectrum sweep over the pressing field (CSV).
    Spectrum,
    /// Helium surface and electron sheet quantities.
    Medium,
    /// Decoherence budget at the device point.
    Decoherence,
    /// Site parameters and couplings at the configured voltages.
    Build,
    /// Resolve a schedule recipe into a concrete schedule.
    Calibrate {
        /// Refine the swap dwell through the dynamics.
        #[arg(long)]
        refine: bool,
    },
    /// Time evolution under the schedule.
    Evolve,
    /// Readout plan, per-site survival and shot sampling.
    Readout,
    /// Calibrated swap run end to end, printing achieved amplitudes.
    DemoSwap,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Medium => "medium",
            Command::Decoherence => "decoherence",
            Command::Build => "build",
            Command::Calibrate { .. } => "calibrate",
            Command::Evolve => "evolve",
            Command::Readout => "readout",
            Command::DemoSwap => "demo-swap",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.common.set;
    if let Command::Calibrate { refine: true } = cli.command {
        overrides.push("schedule.swap.refine=true".into());
    }
    let mut loaded = config::load(cli.common.config.as_deref(), &overrides)?;
    if let Some(dir) = cli.common.out {
        loaded.config.output = dir;
    }
    let cfg = loaded.config.clone();
    let mut out = Artifacts::new(cli.command.name(), &loaded);
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, &mut out)?,
        Command::Medium => commands::medium(&cfg, &mut out)?,
        Command::Decoherence => commands::decoherence(&cfg, &mut out)?,
        Command::Build => commands::build_cmd(&cfg, &mut out)?,
        Command::Calibrate { .. } => commands::calibrate(&cfg, &mut out)?,
        Command::Evolve => commands::evolve_cmd(&cfg, &mut out)?,
        Command::Readout => commands::readout(&cfg, &mut out)?,
        Command::DemoSwap => {
            let r = commands::demo_swap(&cfg, &mut out)?;
            println!("alpha {:.6}", r.alpha);
            println!(
                "|stay|  {:.9}  target cos α {:.9}",
                r.stay_amplitude[0].hypot(r.stay_amplitude[1]),
                r.target_stay
            );
            println!(
                "|moved| {:.9}  target sin α {:.9}",
                r.moved_amplitude[0].hypot(r.moved_amplitude[1]),
                r.target_moved
            );
            println!("fidelity {:.12}", r.fidelity);
        }
    }
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("heqsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
