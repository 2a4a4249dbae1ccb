use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use conformal_cli::commands::{run, Cli};
use conformal_cli::Exit;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Exit::InvalidInput.code() as u8),
            };
        }
    };
    let outcome = run(&cli);
    print!("{}", outcome.manifest.to_json());
    if let Some(msg) = &outcome.error {
        eprintln!("conformal {}: {msg}", cli.command.name());
    }
    ExitCode::from(outcome.exit.code() as u8)
}
