//! `pvdc`: sample, corrupt, split, train, eval, embed, reconstruct, report.

mod commands;

use std::process::ExitCode;

use clap::Parser;

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USER: u8 = 1;
pub const EXIT_INTERNAL: u8 = 2;
pub const EXIT_WARNINGS: u8 = 3;

/// Failure classified by who has to fix it.
#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl From<pvdeconv::Error> for Failure {
    fn from(e: pvdeconv::Error) -> Self {
        match e {
            pvdeconv::Error::NonFinite { .. } | pvdeconv::Error::Graph(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

/// Successful run; `warnings` turns the exit status into [`EXIT_WARNINGS`].
#[derive(Debug, Default)]
pub struct Outcome {
    pub warnings: usize,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("PVDC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::User(format!("PVDC_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match commands::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USER } else { EXIT_OK });
        }
    };
    let result = std::panic::catch_unwind(|| {
        configure_threads()?;
        commands::run(cli)
    });
    let code = match result {
        Ok(Ok(o)) if o.warnings > 0 => {
            eprintln!("finished with {} warning(s)", o.warnings);
            EXIT_WARNINGS
        }
        Ok(Ok(_)) => EXIT_OK,
        Ok(Err(Failure::User(m))) => {
            eprintln!("error: {m}");
            EXIT_USER
        }
        Ok(Err(Failure::Internal(m))) => {
            eprintln!("internal error: {m}");
            EXIT_INTERNAL
        }
        Err(_) => EXIT_INTERNAL,
    };
    ExitCode::from(code)
}
