//! `tracelab` — every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success / no violation, 1 violation captured, 2 usage
//! error, 3 input or configuration error.

mod args;
mod commands;
mod report;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    // Die quietly when a pager closes the pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = args::Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}
