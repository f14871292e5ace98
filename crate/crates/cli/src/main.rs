//! `ugcqa`: label fitting, feature extraction, training and benchmarking from the shell.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ugcqa", version, about = "No-reference quality benchmarking on UGC datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a Gaussian mixture to the scores and derive class thresholds.
    FitLabels(RunArgs),
    /// Extract BRISQUE features for every sample.
    Extract(RunArgs),
    /// Validate an imported feature table against a manifest.
    ImportCheck(RunArgs),
    /// Search hyperparameters and train one model on the whole dataset.
    Train(RunArgs),
    /// Run the repeated split protocol and write reports.
    Benchmark(RunArgs),
    /// Print the summary table of saved reports.
    Report {
        /// Report JSON files or per-repeat CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write `summary.txt` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn computation(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<ugcqa_core::Error> for Failure {
    fn from(e: ugcqa_core::Error) -> Self {
        let code = if e.is_validation() { 1 } else { 2 };
        Failure { code, message: e.to_string() }
    }
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::validation(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn set_workers(config: &RunConfig) -> Result<(), Failure> {
    if let Some(n) = config.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::computation(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, args) = match &cli.command {
        Command::Report { inputs, out } => return commands::report(inputs, out.as_deref()),
        Command::FitLabels(a) => ("fit-labels", a),
        Command::Extract(a) => ("extract", a),
        Command::ImportCheck(a) => ("import-check", a),
        Command::Train(a) => ("train", a),
        Command::Benchmark(a) => ("benchmark", a),
    };
    let config = RunConfig::resolve(name, args)?;
    set_workers(&config)?;
    match cli.command {
        Command::FitLabels(_) => commands::fit_labels(&config),
        Command::Extract(_) => commands::extract(&config),
        Command::ImportCheck(_) => commands::import_check(&config),
        Command::Train(_) => commands::train(&config),
        Command::Benchmark(_) => commands::benchmark(&config),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
