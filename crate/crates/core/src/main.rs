use std::process::ExitCode;

use clap::Parser;
use voxembed::cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("voxembed {}: {e}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
