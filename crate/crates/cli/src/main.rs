//! `sinkstab` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numerical or I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sinkstab", version, about = "Sinkhorn stability diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Sinkhorn on a model, write the divergence trace and a report.
    Run(Common),
    /// Sweep delta and check the drift/integrability conditions.
    Diagnose(Common),
    /// Closed-form linear-Gaussian flow, theoretical rate and optional cross-validation.
    Gaussian(Common),
    /// Re-fit decay rates on an existing trace CSV.
    Rates(RatesArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; must exist.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid refinement factor.
    #[arg(long, default_value_t = 1)]
    refine: usize,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Trace CSV with header `n,side,metric,value`.
    trace: PathBuf,
    #[arg(long, default_value_t = sinkstab::diagnostics::DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Theoretical rate to print next to the fits.
    #[arg(long)]
    theoretical: Option<f64>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<sinkstab::Error> for CliError {
    fn from(e: sinkstab::Error) -> Self {
        use sinkstab::Error::*;
        let code = match e {
            Domain(_) | Precondition(_) | Parse(_) => 2,
            DegenerateMass { .. } | Numerical(_) | Io(_) => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => commands::prepare(&c.config, c.out, c.seed, c.refine).and_then(|ctx| commands::run(&ctx)),
        Command::Diagnose(c) => {
            commands::prepare(&c.config, c.out, c.seed, c.refine).and_then(|ctx| commands::diagnose(&ctx))
        }
        Command::Gaussian(c) => {
            commands::prepare(&c.config, c.out, c.seed, c.refine).and_then(|ctx| commands::gaussian(&ctx))
        }
        Command::Rates(r) => commands::rates(&r.trace, r.burn_in, r.theoretical),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
