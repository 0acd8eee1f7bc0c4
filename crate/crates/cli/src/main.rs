//! `lipforensics`: synthetic data, preprocessing, training and evaluation from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 failed check.

mod cmd;
mod config;
mod data;
mod failure;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::{CliResult, Failure, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "lipforensics", version, about = "Mouth-based face forgery detection")]
struct Cli {
    /// Worker threads for the parallel stages (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic lipreading or forgery corpus with landmarks and a manifest.
    Synth(cmd::synth::SynthArgs),
    /// Align, crop and cache mouth regions for every video of a manifest.
    Preprocess(cmd::preprocess::PreprocessArgs),
    /// Lipreading pretraining or forgery finetuning.
    Train(cmd::train::TrainArgs),
    /// Score a checkpoint under one evaluation protocol.
    Eval(cmd::eval::EvalArgs),
    /// Apply one corruption at one severity to a directory of frames.
    Corrupt(cmd::tools::CorruptArgs),
    /// Occlusion sensitivity map for one clip.
    Occlude(cmd::tools::OccludeArgs),
    /// Compare analytic and finite-difference gradients for every layer kind.
    Gradcheck(cmd::tools::GradcheckArgs),
    /// Parameter counts per partition.
    Params(cmd::tools::ParamsArgs),
}

fn dispatch(cli: &Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => cmd::synth::run(a),
        Command::Preprocess(a) => cmd::preprocess::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Corrupt(a) => cmd::tools::corrupt(a),
        Command::Occlude(a) => cmd::tools::occlude(a),
        Command::Gradcheck(a) => cmd::tools::gradcheck(a),
        Command::Params(a) => cmd::tools::params(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
