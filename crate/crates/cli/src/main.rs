use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::PipelineConfig;

/// Phase discovery and interpretable classification of lattice snapshots.
#[derive(Parser, Debug)]
#[command(name = "hccnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset and its ground truth.
    Generate(commands::GenerateArgs),
    /// Per-set mean power spectra as CSV.
    Spectra(commands::SpectraArgs),
    /// Spectral features, PCA and mixture clustering.
    Unsupervised(commands::UnsupervisedArgs),
    /// Train one phase classifier and save a checkpoint.
    Train(commands::TrainArgs),
    /// Confidence maps, phase diagram, Fourier maps and correlators.
    Interpret(commands::InterpretArgs),
    /// Cross-validated architecture comparison for one phase.
    Ablate(commands::AblateArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(ccnn_core::Error),
}

impl From<ccnn_core::Error> for CliError {
    fn from(e: ccnn_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Loads the config file and applies the shared overrides.
pub fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Spectra(a) => commands::spectra(a),
        Command::Unsupervised(a) => commands::unsupervised(a),
        Command::Train(a) => commands::train(a),
        Command::Interpret(a) => commands::interpret(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hccnn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
