use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    momhal::cli::run(momhal::cli::Cli::parse())
}
