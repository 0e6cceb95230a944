use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use stm_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("stm: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
