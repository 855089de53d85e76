use clap::Parser;
use std::process::ExitCode;
use wuwse::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wuwse: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
