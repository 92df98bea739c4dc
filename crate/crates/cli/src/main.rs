//! Batch front-end: `visclimit <command> --config run.json --out dir`.
//!
//! Exit codes: 0 success, 2 configuration or manifest error, 3 numerical
//! failure, 4 no inviscid eigenvalue above the sampled exponent.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use run::Run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] visclimit::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("hypothesis not satisfied: {0}")]
    Empty(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
            CliError::Empty(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "visclimit", version, about = "Spectra of linearized Euler/Navier-Stokes operators in the vanishing-viscosity limit")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sampled top Lyapunov exponent of the amplitude cocycle.
    Lyapunov(Common),
    /// Galerkin spectrum at the configured viscosity (and optional N-sweep).
    Spectrum(Common),
    /// Follows the rightmost unstable eigenvalue along the viscosity grid.
    Branch(Common),
    /// Riesz projection for a contour.
    Riesz(Common),
    /// Wave-packet residual sweep.
    Packet(Common),
    /// Merges the manifests of a run directory.
    Report {
        dir: PathBuf,
        /// Where to write the report (default: the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn prepare(c: &Common) -> Result<Run, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = run::out_dir(c.out.as_deref(), &cfg);
    Run::new(cfg, out)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.cmd {
        Cmd::Lyapunov(c) => prepare(&c)?.lyapunov(),
        Cmd::Spectrum(c) => prepare(&c)?.spectrum_cmd(),
        Cmd::Branch(c) => prepare(&c)?.branch(),
        Cmd::Riesz(c) => prepare(&c)?.riesz(),
        Cmd::Packet(c) => prepare(&c)?.packet(),
        Cmd::Report { dir, out } => {
            let out = out.unwrap_or_else(|| dir.clone());
            report::report(&dir, &out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("visclimit: {e}");
            ExitCode::from(e.code())
        }
    }
}
