mod args;
mod commands;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

const USAGE_ERROR: u8 = 2;

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os().collect()))
}

fn run(argv: Vec<OsString>) -> u8 {
    let argv = match args::expand_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return USAGE_ERROR;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return USAGE_ERROR;
    }
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error [{}]: {}", f.module, f.message);
            1
        }
    }
}

/// Caps the worker pool at `TN_THREADS` when set.
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("TN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("TN_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(cmd: &Command) -> Outcome<()> {
    let run = cmd.run_args();
    commands::prepare_run_dir(&run.out, run.force)?;
    match cmd {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a),
        Command::TrainDisc(a) => commands::train_disc(a),
        Command::Classify(a) => commands::classify(a),
        Command::Eval(a) => commands::eval(a),
        Command::Distances(a) => commands::distances(a),
        Command::Entropy(a) => commands::entropy(a),
        Command::Compare(a) => commands::compare(a),
    }
}
