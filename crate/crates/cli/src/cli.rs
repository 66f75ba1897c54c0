use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{check, classify, compute, emit, theorems};
use crate::config::{parse_list, Degenerate, Format, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "riskshare", version, about = "Risk-sharing contributions and axiom checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a rule to a pool file and write its contributions.
    Compute(Flags),
    /// Check properties of a rule on a pool or a generated battery.
    Check(Flags),
    /// Classify rules by reshuffling, anonymity and aggregation.
    Classify(Flags),
    /// Run the characterization theorem harness.
    Theorems(Flags),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Pool CSV with header prob,X1,...,Xn.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub q1: Option<String>,
    #[arg(long)]
    pub q2: Option<String>,
    /// Scenario indices: typical[,high,low].
    #[arg(long)]
    pub omegas: Option<String>,
    /// Seat weights for weighted_q_prop.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, value_enum)]
    pub degenerate: Option<Degenerate>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol_abs: Option<f64>,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    /// Comma-separated property names (or "all").
    #[arg(long)]
    pub properties: Option<String>,
    /// Comma-separated rule names for classify.
    #[arg(long)]
    pub rules: Option<String>,
    /// Comma-separated theorem ids (T1..T6).
    #[arg(long)]
    pub theorems: Option<String>,
    /// Directory for output files; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Flags {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let strings = |s: &Option<String>| s.as_ref().map(|v| v.split(',').map(|x| x.trim().to_string()).collect());
        let over = RunConfig {
            rule: self.rule.clone(),
            q: self.q.clone(),
            q1: self.q1.clone(),
            q2: self.q2.clone(),
            omegas: self.omegas.as_deref().map(|s| parse_list(s, "omegas")).transpose()?,
            weights: self.weights.as_deref().map(|s| parse_list(s, "weights")).transpose()?,
            degenerate: self.degenerate,
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            seed: self.seed,
            battery: None,
            properties: strings(&self.properties),
            rules: strings(&self.rules),
            theorems: strings(&self.theorems),
            pool: self.pool.clone(),
            out: self.out.clone(),
            format: self.format,
        };
        Ok(base.overlay(over))
    }
}

fn execute(cli: &Cli) -> CliResult<(String, Option<String>)> {
    let (flags, f): (&Flags, fn(&RunConfig) -> CliResult<crate::commands::Outcome>) = match &cli.command {
        Command::Compute(a) => (a, compute),
        Command::Check(a) => (a, check),
        Command::Classify(a) => (a, classify),
        Command::Theorems(a) => (a, theorems),
    };
    let cfg = flags.resolve()?;
    let outcome = f(&cfg)?;
    let text = emit(&outcome, cfg.out.as_deref())?;
    Ok((text, outcome.mismatch))
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok((text, mismatch)) => {
            print!("{text}");
            let _ = std::io::stdout().flush();
            match mismatch {
                Some(m) => {
                    let e = CliError::Mismatch(m);
                    eprintln!("error: {e}");
                    e.exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
