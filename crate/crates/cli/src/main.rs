//! `ssvh` — the pipeline driver. Subcommands cover the whole workflow:
//! synthesize data, build the neighbor graph, train, encode, retrieve,
//! evaluate, and sweep a hyperparameter. Every file-producing command
//! drops a JSON manifest next to its outputs recording the resolved
//! configuration, inputs, seed, and wall clock.
//!
//! Exit codes: 0 success; 1 usage errors (bad flags or flag combinations);
//! 2 data or format errors (missing/corrupt/inconsistent files); 3 numeric
//! failure (training aborted on a non-finite loss or gradient).

mod commands;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ssvh", version, about = "Self-supervised sequence hashing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset with known cluster structure
    GenData(commands::gen_data::GenDataArgs),
    /// Build the neighborhood graph from per-frame features
    BuildGraph(commands::build_graph::BuildGraphArgs),
    /// Train the hashing model (optionally resuming a checkpoint)
    Train(commands::train::TrainArgs),
    /// Encode features into packed binary codes with a trained model
    Encode(commands::encode::EncodeArgs),
    /// Rank a database against one of its own codes by Hamming distance
    Retrieve(commands::retrieve::RetrieveArgs),
    /// Score codes against labels with mAP@K
    Eval(commands::eval::EvalArgs),
    /// Re-train and evaluate across a grid of one hyperparameter
    Sweep(commands::sweep::SweepArgs),
}

/// A post-parse flag problem: clap accepted the invocation but the
/// combination makes no sense. Exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(core) = cause.downcast_ref::<ssvh_core::error::Error>() {
            return match core {
                ssvh_core::error::Error::Numeric(_) | ssvh_core::error::Error::NonFinite { .. } => {
                    3
                }
                _ => 2,
            };
        }
    }
    2
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::BuildGraph(args) => commands::build_graph::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Encode(args) => commands::encode::run(args),
        Command::Retrieve(args) => commands::retrieve::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
