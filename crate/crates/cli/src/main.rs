//! Command-line front end for the full experiment pipeline: synthetic data
//! generation, cross-validated training, evaluation, quantization, inference,
//! host benchmarking and power estimation.

mod commands;
mod config;
mod util;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
/// failure.
#[derive(Parser)]
#[command(name = "gridfuse", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic paired thermal/depth gesture dataset.
    Generate(commands::GenerateArgs),
    /// Train one fusion strategy under stratified k-fold cross-validation.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint: confusion matrix, F1, cluster indices.
    Evaluate(commands::EvaluateArgs),
    /// Fold batch norm, calibrate and emit an int8 model plus an agreement report.
    Quantize(commands::QuantizeArgs),
    /// Classify one sample with a float checkpoint or a quantized model.
    Infer(commands::InferArgs),
    /// Host wall-clock latency of repeated single-sample inference.
    Bench(commands::BenchArgs),
    /// Duty-cycle power and battery-life estimates from a latency table.
    Power(commands::PowerArgs),
}

#[derive(clap::Args, Clone)]
pub struct CommonArgs {
    /// Optional experiment config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for fold training (0 = all cores). Results are
    /// identical for any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Quantize(args) => commands::quantize(args),
        Command::Infer(args) => commands::infer(args),
        Command::Bench(args) => commands::bench(args),
        Command::Power(args) => commands::power(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Maps failures onto the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(core_err) = err.downcast_ref::<gridfuse::Error>() {
        match core_err {
            gridfuse::Error::Numerical(_) => 3,
            _ => 2,
        }
    } else {
        2
    }
}
