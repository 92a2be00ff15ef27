//! The `ksae` command-line tool: argument parsing, `--config` files, run
//! manifests and the file formats that only the front end needs (PGM filter
//! grids, activation histograms).
//!
//! Exit codes: 0 on success, 1 when a command fails at runtime, 2 for usage
//! errors.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod hist;
pub mod manifest;
pub mod pgm;

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};

/// A problem with how the tool was invoked; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Caps the global thread pool at `KSAE_THREADS` when set.
fn configure_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("KSAE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("KSAE_THREADS must be a positive integer, got `{v}`")))?;
    // Fails only if the pool already exists, e.g. on a second call in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let argv = match config::expand_config(argv.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let matches = match args::Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match args::Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match commands::dispatch(&cli.command, config::resolved_flags(&matches)) {
        Ok(()) => EXIT_OK,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
