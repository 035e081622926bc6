//! Command-line front end for the nlqc pipeline.
//!
//! One run per invocation: read a JSON config, validate it against the
//! published schema, dispatch, and write a JSON report. Exit codes are
//! 0 on success, 2 on a verification failure, 1 on a usage error.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use config::{parse_config, RunConfig, SubcommandName};
use run::Witness;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

/// Environment variable that redirects relative report paths.
pub const OUT_DIR_ENV: &str = "NLQC_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "nlqc", version, about = "Non-local quantum computation pipeline runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
pub enum Command {
    /// Information spread of a lattice model.
    Spread,
    /// Quarter decomposition of the model dynamics.
    Decompose,
    /// Two-party protocol against the pseudo-bulk dynamics.
    Protocol,
    /// Clifford toy model on stacked holographic blocks.
    Holocode,
    /// Normal, port-based and cascaded teleportation.
    Teleport,
    /// Error certificate composition or an end-to-end run.
    Certify,
    /// Coarse-versus-fine simulation conditions.
    CheckSim,
}

impl Command {
    pub fn name(self) -> SubcommandName {
        match self {
            Command::Spread => SubcommandName::Spread,
            Command::Decompose => SubcommandName::Decompose,
            Command::Protocol => SubcommandName::Protocol,
            Command::Holocode => SubcommandName::Holocode,
            Command::Teleport => SubcommandName::Teleport,
            Command::Certify => SubcommandName::Certify,
            Command::CheckSim => SubcommandName::CheckSim,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: SubcommandName,
    pub config: Value,
    pub config_hash: String,
    pub seed: u64,
    pub status: &'static str,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub wall_time_s: f64,
    pub result: Value,
}

pub fn config_hash(echo: &Value) -> String {
    let digest = Sha256::digest(echo.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn usage(msg: impl std::fmt::Display) -> i32 {
    eprintln!("nlqc: {msg}");
    EXIT_USAGE
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();

    let mut cfg = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => return usage(format!("cannot read {}: {e}", path.display())),
            };
            match parse_config(&text) {
                Ok(c) => c,
                Err(e) => return usage(format!("invalid config {}:\n{e}", path.display())),
            }
        }
        None => RunConfig::for_subcommand(name),
    };
    if cfg.subcommand != name {
        return usage(format!("config is for '{}' but the subcommand is '{name}'", cfg.subcommand));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone());
    let cfg = cfg.effective();

    if let Some(n) = cli.jobs {
        if n == 0 {
            return usage("--jobs must be at least 1");
        }
        // A pool built earlier in the process (tests) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let start = Instant::now();
    let outcome = match run::execute(&cfg) {
        Ok(o) => o,
        Err(e) => return usage(e.0),
    };
    let echo = serde_json::to_value(&cfg).expect("config serializes");
    let report = Report {
        tool: "nlqc",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name,
        config_hash: config_hash(&echo),
        config: echo,
        seed: cfg.seed,
        status: if outcome.failures.is_empty() { "ok" } else { "verification_failure" },
        failures: outcome.failures,
        witness: outcome.witness,
        wall_time_s: start.elapsed().as_secs_f64(),
        result: outcome.result,
    };
    let code = if report.failures.is_empty() { EXIT_OK } else { EXIT_VERIFY };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let written = match out {
        Some(p) => {
            let p = resolve_out(&p);
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                if let Err(e) = std::fs::create_dir_all(dir) {
                    return usage(format!("cannot create {}: {e}", dir.display()));
                }
            }
            std::fs::write(&p, text).map_err(|e| format!("cannot write {}: {e}", p.display()))
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        return usage(e);
    }
    for f in &report.failures {
        eprintln!("nlqc: verification failure: {f}");
    }
    code
}
