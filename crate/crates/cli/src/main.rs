use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = semrag_cli::Cli::parse();
    match semrag_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
