//! `qml`: experiment runner for slowed torus flows, time-t maps and
//! conjugated rotations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;
mod output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error {0}")]
    Config(String),
    #[error("construction rejected: {0}")]
    Rejected(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Rejected(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<quasimin::Error> for CliError {
    fn from(e: quasimin::Error) -> Self {
        match e {
            quasimin::Error::InvalidInput(msg) => CliError::Config(msg),
            e @ quasimin::Error::ConstructionRejected { .. } => CliError::Rejected(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qml", version, about = "Quasi-minimal dynamics on the punctured torus", long_about = config::DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the `seed` field of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for scans.
    #[arg(long, global = true, env = "QML_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Build the punctured field and report acceptance or the same-orbit witness.
    Construct,
    /// Trace one flow orbit, or iterate a time-t map.
    Orbit,
    /// Grid-coverage classification of orbits from many starts.
    Density,
    /// Time-t map coverage against the translation oracle.
    ScanT,
    /// Return times and ball certificates for a conjugated rotation.
    Recurrence,
    /// Integer-relation search for a translation vector.
    Oracle,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let out = output::OutDir::new(cli.out);
    match cli.command {
        Command::Construct => commands::construct(&cfg, &out),
        Command::Orbit => commands::orbit(&cfg, &out),
        Command::Density => commands::density(&cfg, &out),
        Command::ScanT => commands::scan_t(&cfg, &out),
        Command::Recurrence => commands::recurrence(&cfg, &out),
        Command::Oracle => commands::oracle(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qml: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
