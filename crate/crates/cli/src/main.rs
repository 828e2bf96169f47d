//! `knotspin`: file-based front end for bands, Berry phases, evolution,
//! pulse compilation, NV simulation, tomography and the full pipeline.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::Scenario;
use output::{OutDir, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "knotspin",
    version,
    about = "Non-Hermitian knot topology toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model preset (unlink, unknot, hopf_link) or parameter file.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Scenario JSON with per-command sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// k grid size.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dephasing ensemble size.
    #[arg(long, global = true)]
    pub ensemble: Option<usize>,
    /// Shots per tomography sequence.
    #[arg(long, global = true)]
    pub shots: Option<u64>,
    /// Restrict each tone to its own nuclear subspace.
    #[arg(long, global = true, action = ArgAction::Set)]
    pub selective: Option<bool>,
    /// Rotating-wave approximation for the drive.
    #[arg(long, global = true, action = ArgAction::Set)]
    pub rwa: Option<bool>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Tracked band structure and phase classification.
    Bands,
    /// Braid winding number.
    Winding,
    /// Global biorthogonal Berry phase and eigenstate projections.
    Berry,
    /// Non-Hermitian evolution, steady state and k fit.
    Evolve,
    /// Compile a dilation schedule into microwave pulses.
    Dilate,
    /// Simulate the compiled pulses on the NV spin pair.
    SimulateNv,
    /// Maximum-likelihood state reconstruction from PL counts.
    Tomo,
    /// End-to-end synthetic experiment.
    Pipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Winding => "winding",
            Command::Berry => "berry",
            Command::Evolve => "evolve",
            Command::Dilate => "dilate",
            Command::SimulateNv => "simulate-nv",
            Command::Tomo => "tomo",
            Command::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(knotspin::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<knotspin::Error> for CliError {
    fn from(e: knotspin::Error) -> Self {
        CliError::Core(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let scenario = match &cli.common.config {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    let ctx = commands::Context::new(scenario, cli.common.clone())?;
    let out = OutDir::create(&cli.common.out)?;
    match cli.command {
        Command::Bands => commands::bands(&ctx, &out)?,
        Command::Winding => commands::winding(&ctx, &out)?,
        Command::Berry => commands::berry(&ctx, &out)?,
        Command::Evolve => commands::evolve(&ctx, &out)?,
        Command::Dilate => commands::dilate(&ctx, &out)?,
        Command::SimulateNv => commands::simulate_nv(&ctx, &out)?,
        Command::Tomo => commands::tomo(&ctx, &out)?,
        Command::Pipeline => commands::pipeline(&ctx, &out)?,
    }
    out.json(
        "manifest.json",
        &RunManifest {
            command: cli.command.name().into(),
            config: cli.common.config.clone(),
            out: out.path().to_path_buf(),
            seed: ctx.seed,
            version: env!("CARGO_PKG_VERSION"),
            duration: start.elapsed().as_secs_f64(),
        },
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
