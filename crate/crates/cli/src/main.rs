//! `slu`: one binary for validation, tokenization, scoring, augmentation,
//! toy-model training and decoding.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input or usage.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SLU_LOG", "info"))
        .format_timestamp(None)
        .init();
    log::info!("resolved configuration: {cli:?}");

    let result = match &cli.command {
        Command::Validate(a) => commands::validate(a, cli.pretty),
        Command::Tokenize(a) => commands::tokenize(a, cli.pretty),
        Command::Score(a) => commands::score(a, cli.pretty),
        Command::Wer(a) => commands::wer(a, cli.pretty),
        Command::Augment(a) => commands::augment(a, cli.pretty),
        Command::Synth(a) => commands::synth(a, cli.pretty),
        Command::TrainToy(a) => commands::train_toy(a, cli.pretty),
        Command::Decode(a) => commands::decode(a, cli.pretty),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
