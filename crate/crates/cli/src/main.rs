//! `lcmat`: coreset selection and dataset condensation from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure (including a failed `verify`).

mod args;
mod commands;
mod config;
mod error;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::load_toml;
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = commands::Output {
        dir: cli.out_dir,
        format: cli.format,
    };
    let file = cli.config.as_deref();
    match cli.command {
        Command::Gen(a) => {
            let mut cfg = load_toml(file)?;
            a.apply(&mut cfg);
            commands::gen(&cfg, &out)
        }
        Command::Select(a) => {
            let mut cfg = load_toml(file)?;
            a.apply(&mut cfg);
            commands::select_cmd(&cfg, &out)
        }
        Command::Condense(a) => {
            let mut cfg = load_toml(file)?;
            a.apply(&mut cfg);
            commands::condense_cmd(&cfg, &out)
        }
        Command::Evaluate(a) => {
            let mut cfg = load_toml(file)?;
            a.apply(&mut cfg);
            commands::evaluate_cmd(&cfg, &out)
        }
        Command::Verify(a) => {
            let mut cfg = load_toml(file)?;
            a.apply(&mut cfg);
            commands::verify_cmd(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
