//! Command-line front end of `lplab`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use clap::Parser;

use crate::args::Cli;
use crate::commands::{run_command, Context};
use crate::error::CliError;

fn init_pool(workers: Option<usize>) -> Result<usize, CliError> {
    match workers {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => {
            // A second call in the same process (tests) keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
            Ok(rayon::current_num_threads())
        }
        None => Ok(rayon::current_num_threads()),
    }
}

/// Parses `argv`, runs the subcommand and returns the exit status.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::EXIT_USAGE } else { 0 };
        }
    };
    let result = init_pool(cli.workers).and_then(|workers| {
        let ctx = Context {
            assert_mode: cli.assert_mode,
            workers,
        };
        run_command(&cli.command, ctx)
    });
    match result {
        Ok(outcome) => {
            if !outcome.reproduce.is_empty() {
                eprintln!("reproduce: {}", outcome.reproduce);
            }
            let failed: Vec<String> = outcome
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            for f in &failed {
                eprintln!("check failed: {f}");
            }
            if cli.assert_mode && !failed.is_empty() {
                let e = CliError::Assertion(failed);
                eprintln!("error: {e}");
                return e.exit_code();
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
