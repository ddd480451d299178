//! Command-line front end: configuration, command dispatch and artifacts.

pub mod config;
pub mod expr;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{parse_config, Command, RunConfig};
pub use expr::{parse_expr, Expr};
pub use run::{run, RunOutcome, RunStatus};

use crate::error::Error;

pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "xstar", version, about = "Solve and verify drift-shifted convex gradient functionals")]
pub struct Args {
    /// TOML run configuration; without it the verification suite runs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Check to run (repeatable, or `all`); implies the verify command.
    #[arg(long = "check")]
    pub checks: Vec<String>,
    /// Grid resolution n, with step 1/n.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

/// Exit status for an error: 2 for anything wrong with the input, 1 for
/// failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Convergence { .. } => 1,
        _ => EXIT_CONFIG,
    }
}

/// Merges the config file with command-line overrides.
pub fn resolve_config(args: &Args) -> crate::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => RunConfig::verify_all(),
    };
    if !args.checks.is_empty() {
        if cfg.command != Command::Verify {
            return Err(Error::Config("--check only applies to the verify command".into()));
        }
        cfg.checks = args.checks.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(grid) = args.grid {
        cfg.grid = Some(grid);
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Sizes the global thread pool from `XSTAR_THREADS`.
pub fn configure_threads() -> crate::Result<()> {
    let Ok(v) = std::env::var("XSTAR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("XSTAR_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args(args: Args) -> i32 {
    let result = configure_threads().and_then(|()| resolve_config(&args)).and_then(|cfg| {
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        run(&cfg, &out)
    });
    match result {
        Ok(outcome) => {
            if !args.quiet {
                for line in &outcome.summary {
                    println!("{line}");
                }
                for f in &outcome.files {
                    println!("wrote {}", f.display());
                }
            }
            outcome.status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let args = Args::parse_from(["xstar", "--check", "star_identities", "--check", "comparison", "--seed", "7", "--grid", "16"]);
        let cfg = resolve_config(&args).unwrap();
        assert_eq!(cfg.checks, ["star_identities", "comparison"]);
        assert_eq!((cfg.seed, cfg.grid()), (7, 16));
        let args = Args::parse_from(["xstar", "--check", "bogus"]);
        assert_eq!(exit_code(&resolve_config(&args).unwrap_err()), EXIT_CONFIG);
    }
}
