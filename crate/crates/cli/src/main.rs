use std::process::ExitCode;

use cgs_ledger_cli::{execute, Cli};
use clap::error::ErrorKind;
use clap::Parser;

#[tokio::main]
async fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            println!("error: usage {}", e.kind());
            return ExitCode::FAILURE;
        }
    };
    match execute(&cli).await {
        Ok(summary) => {
            println!("result: {summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            println!("error: {}", f.0);
            ExitCode::FAILURE
        }
    }
}
