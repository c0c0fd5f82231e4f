//! `emproj` command-line interface.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use emproj::Error;

use args::{Cli, Command};
use commands::Context;

/// 2 configuration, 3 data, 4 numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
        Error::Domain { .. } | Error::NonStationary(_) | Error::Numeric(_) => 4,
    }
}

fn run(cli: &Cli) -> emproj::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
    }
    let name = match &cli.command {
        Command::Map(_) => "map",
        Command::Calibrate(_) => "calibrate",
        Command::Diagnose(_) => "diagnose",
        Command::Project(_) => "project",
        Command::Cdf(_) => "cdf",
        Command::SspCompare(_) => "ssp-compare",
        Command::Sensitivity(_) => "sensitivity",
        Command::Validate(_) => "validate",
    };
    let ctx = Context::new(cli, name)?;
    match &cli.command {
        Command::Map(a) => commands::map(ctx, a),
        Command::Calibrate(a) => commands::calibrate(ctx, a),
        Command::Diagnose(a) => commands::diagnose(ctx, a),
        Command::Project(a) => commands::project(ctx, a),
        Command::Cdf(a) => commands::cdf(ctx, a),
        Command::SspCompare(a) => commands::ssp_compare_cmd(ctx, a),
        Command::Sensitivity(a) => commands::sensitivity(ctx, a),
        Command::Validate(a) => commands::validate(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
