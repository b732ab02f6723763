use std::process::ExitCode;

use clap::Parser;
use ptnn_cli::{execute, Cli};

fn main() -> ExitCode {
    // usage errors share exit 1 with runtime errors; 2 is reserved for unfactorable layers
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
