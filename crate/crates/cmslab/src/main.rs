use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cmslab::cli::Cli::parse();
    match cmslab::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
