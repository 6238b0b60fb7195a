mod commands;
mod config;
mod manifest;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use crate::config::{Command, Overrides, RunConfig};
use crate::manifest::Manifest;

/// Invalid flags, config values or missing inputs (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "pvae-policy", version, about = "Policy learning from logged data with missing features")]
struct Cli {
    /// Worker threads for recommendation and evaluation (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Simulate a logged dataset with ground truth.
    GenData(Overrides),
    /// Train the partial VAE on the logged features.
    TrainPvae(Overrides),
    /// Fit the logging-policy model on PVAE imputations.
    FitPropensity(Overrides),
    /// Train the conditional partial VAE with inverse-propensity weights.
    TrainCpvae(Overrides),
    /// Recommend actions for one or more partially observed rows.
    Recommend(Overrides),
    /// Train (or load) models and evaluate strategies on a fresh test set.
    Evaluate(Overrides),
    /// Average treatment effect error on a two-action dataset.
    Ate(Overrides),
    /// Information-theoretic decomposition of a discrete environment.
    Limits(Overrides),
    /// Probability mass a conservative threshold may exclude.
    Risk(Overrides),
    /// Re-run a recorded manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Fail unless every output is reproduced byte for byte.
        #[arg(long)]
        check: bool,
    },
}

impl Sub {
    fn split(self) -> Option<(Command, Overrides)> {
        Some(match self {
            Sub::GenData(o) => (Command::GenData, o),
            Sub::TrainPvae(o) => (Command::TrainPvae, o),
            Sub::FitPropensity(o) => (Command::FitPropensity, o),
            Sub::TrainCpvae(o) => (Command::TrainCpvae, o),
            Sub::Recommend(o) => (Command::Recommend, o),
            Sub::Evaluate(o) => (Command::Evaluate, o),
            Sub::Ate(o) => (Command::Ate, o),
            Sub::Limits(o) => (Command::Limits, o),
            Sub::Risk(o) => (Command::Risk, o),
            Sub::Replay { .. } => return None,
        })
    }
}

fn execute(cfg: RunConfig, manifest_path: Option<PathBuf>, threads: usize) -> Result<()> {
    let outcome = commands::run(&cfg, threads)?;
    let mut stdout = std::io::stdout().lock();
    for line in &outcome.report {
        // A closed pipe (for example `| head`) is not a failure of the run.
        if writeln!(stdout, "{line}").is_err() {
            break;
        }
    }
    if let Some(path) = manifest_path {
        Manifest::new(cfg, outcome.outputs, outcome.summary).write(&path)?;
        info!("manifest written to {}", path.display());
    }
    Ok(())
}

fn replay(path: &Path, check: bool, threads: usize) -> Result<()> {
    let recorded = Manifest::read(path)?;
    let mut before = Vec::new();
    if check {
        for p in recorded.outputs.iter().map(PathBuf::as_path).chain([path]) {
            let bytes = std::fs::read(p).with_context(|| format!("reading recorded output {}", p.display()))?;
            before.push((p.to_path_buf(), bytes));
        }
    }
    execute(recorded.config, Some(path.to_path_buf()), threads)?;
    let mut differing = Vec::new();
    for (p, bytes) in &before {
        if std::fs::read(p)? != *bytes {
            differing.push(p.display().to_string());
        }
    }
    if !differing.is_empty() {
        anyhow::bail!(pvae_policy::Error::Data(format!("replay differs in: {}", differing.join(", "))));
    }
    if check {
        println!("replay identical: {} files", before.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.max(1);
    match cli.command {
        Sub::Replay { manifest, check } => replay(&manifest, check, threads),
        other => {
            let (command, flags) = other.split().expect("replay handled above");
            let merged = Overrides::load(&flags)?;
            let cfg = RunConfig::resolve(command, &merged)?;
            let manifest = cfg.manifest_path(merged.manifest.as_deref());
            execute(cfg, manifest, threads)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 1;
    }
    match err.chain().find_map(|e| e.downcast_ref::<pvae_policy::Error>()) {
        Some(e) if e.is_usage() => 1,
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

/// The error chain joined with `: `, skipping causes already quoted by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
