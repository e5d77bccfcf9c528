mod args;
mod data;
mod evaluate;
mod output;
mod train;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad flag values found after parsing; reported like clap's own usage errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest => data::ingest(g),
        Command::Synth(a) => data::synth(g, &a),
        Command::Stats(a) => data::stats(g, &a),
        Command::Pretrain(a) => train::pretrain(g, &a),
        Command::TrainStage2(a) => train::stage2(g, &a),
        Command::TrainJoint(a) => train::joint(g, &a),
        Command::Eval(a) => evaluate::eval(g, &a),
        Command::Explain(a) => evaluate::explain(g, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // help and version exit 0, usage errors exit 2
        Err(e) => e.exit(),
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
