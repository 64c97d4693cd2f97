use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use convexity_cli::{cmd_simulate, cmd_test, Cli, Command};

const USAGE_OR_DATA_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(args) => cmd_test(args).map(|(code, out)| (code, out.into_bytes())),
        Command::Simulate(args) => cmd_simulate(args).map(|out| (0, out)),
    };
    match result {
        Ok((code, out)) => {
            if let Err(e) = std::io::stdout().write_all(&out) {
                eprintln!("error: {e}");
                return ExitCode::from(USAGE_OR_DATA_ERROR);
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE_OR_DATA_ERROR)
        }
    }
}
