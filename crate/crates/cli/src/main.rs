//! `geoqc`: dataset generation, training, evaluation and compilation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geoqc_core::GeoqcError;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "geoqc",
    version,
    about = "Compile few-qubit unitaries into Pauli-exponential circuits"
)]
struct Cli {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (falls back to GEOQC_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Global,
    Local,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Global => "global",
            Kind::Local => "local",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a geodesic (global) or coefficient (local) dataset.
    GenData(commands::GenDataArgs),
    /// Train a decomposition network and write the model and loss curves.
    Train(commands::TrainArgs),
    /// Compile a unitary into coefficients and a circuit.
    Compile(commands::CompileArgs),
    /// Report losses and accuracy metrics of a model on a dataset.
    Eval(commands::EvalArgs),
    /// Turn a coefficient file into circuit text.
    EmitCircuit(commands::EmitArgs),
}

/// Error with its process exit code: 1 usage/config, 2 data, 3 numeric.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<GeoqcError> for CliError {
    fn from(e: GeoqcError) -> Self {
        let code = if e.is_numeric() {
            3
        } else if matches!(e, GeoqcError::InvalidInput(_)) {
            1
        } else {
            2
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(t) = flag {
        return Ok(Some(t));
    }
    match std::env::var("GEOQC_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::usage(format!("GEOQC_THREADS={v:?} is not a thread count"))),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = thread_count(cli.threads)? {
        if t == 0 {
            return Err(CliError::usage("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure thread pool: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::GenData(a) => commands::gen_data(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Compile(a) => commands::compile(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::EmitCircuit(a) => commands::emit_circuit(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
