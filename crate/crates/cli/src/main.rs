use std::process::ExitCode;

use clap::Parser;
use kolmo_cli::{exit_code, run, threads_from_env, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| run(&cli, threads));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
