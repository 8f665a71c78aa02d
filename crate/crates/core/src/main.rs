use clap::Parser;
use extraction_game::cli::{self, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(cli::run(cli)),
        Err(e) => {
            // Help and version land on stdout with exit 0; genuine argument
            // errors share exit 1 with config validation failures so that 2
            // and 3 stay reserved for solver and verification outcomes.
            let code = if e.use_stderr() { cli::EXIT_INPUT } else { cli::EXIT_OK };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
