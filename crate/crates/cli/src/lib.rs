//! `topeq`: batch certification of dichotomies, bounded solutions and
//! equivalence maps, driven by a JSON config and writing `summary.json` and
//! `detail.csv` to an output directory.
//!
//! Exit codes: 0 every check passed, 1 a check failed, 2 bad config or
//! usage, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use topeq_core::Error;

use crate::config::RunConfig;
use crate::output::Outcome;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Rejected(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn from_core(e: Error) -> Self {
        match e {
            Error::CertificateRejected { .. } | Error::NotApplicable(_) => CliError::Rejected(e.to_string()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Rejected(_) => EXIT_CHECK_FAILED,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Rejected(_) => "rejected",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Rejected(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

#[derive(Debug, Parser)]
#[command(name = "topeq", version, about = "Dichotomy certification and equivalence-map checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for summary.json and detail.csv.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the sampling seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the window, as "a,b".
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub window: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the dichotomy certificate and the perturbation hypotheses.
    Certify,
    /// Solve for bounded solutions and cross-check them against an oracle.
    Bounded,
    /// Build the equivalence maps and check their properties.
    Verify,
    /// Measure the continuity modulus of H against the Hölder bound.
    Modulus,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Bounded => "bounded",
            Command::Verify => "verify",
            Command::Modulus => "modulus",
        }
    }
}

pub fn parse_window(s: &str) -> Result<[i64; 2], CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => {
            let a = a.parse().map_err(|_| CliError::Config(format!("bad window bound `{a}`")))?;
            let b = b.parse().map_err(|_| CliError::Config(format!("bad window bound `{b}`")))?;
            Ok([a, b])
        }
        _ => Err(CliError::Config(format!("window must look like \"a,b\", got `{s}`"))),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = seed;
    }
    if let Some(w) = &cli.window {
        cfg.window = Some(parse_window(w)?);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.as_ref()).map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let cfg = load_config(&cli);
    let dir = out_dir(&cli, cfg.as_ref().ok());
    let result = cfg.and_then(|cfg| {
        let outcome = commands::dispatch(cli.command, &cfg)?;
        Ok((cfg, outcome))
    });
    let (code, written) = match result {
        Ok((cfg, outcome)) => {
            let code = if outcome.passed { EXIT_PASS } else { EXIT_CHECK_FAILED };
            (code, output::write_outcome(&dir, cli.command, Some(&cfg), &outcome, code))
        }
        Err(err) => {
            eprintln!("topeq {}: {err}", cli.command.name());
            let outcome = Outcome::from_error(&err);
            (err.exit_code(), output::write_outcome(&dir, cli.command, None, &outcome, err.exit_code()))
        }
    };
    if let Err(e) = written {
        eprintln!("topeq: {e}");
        return EXIT_CONFIG;
    }
    println!("topeq {}: {} (exit {code}), reports in {}", cli.command.name(), status_word(code), dir.display());
    code
}

fn status_word(code: i32) -> &'static str {
    match code {
        EXIT_PASS => "pass",
        EXIT_CHECK_FAILED => "check failed",
        EXIT_NUMERICAL => "numerical failure",
        _ => "config error",
    }
}
