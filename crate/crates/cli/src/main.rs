mod args;
mod commands;
mod error;
mod output;
mod viz;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::Output;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let out = Output { format: cli.format };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &out),
        Command::Density(a) => commands::density(a, &out),
        Command::Sample(a) => commands::sample(a, &out),
        Command::Prune(a) => commands::prune(a, &out),
        Command::Run { run, manifest } => commands::run_cmd(run, manifest, &out),
        Command::Viz(a) => commands::viz(a, &out),
        Command::Stats { run, manifest } => commands::stats(run, manifest.as_deref(), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evstu: {e}");
            e.code()
        }
    }
}
