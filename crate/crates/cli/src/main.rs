use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use nids_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                // usage errors share the configuration exit code
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nids: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
