//! `crnir`: audits, multi-bump solves and parameter sweeps.
//!
//! Exit codes: 0 pass, 1 usage or configuration error, 2 failed audit check,
//! 3 solver non-convergence.

mod config;
mod output;
mod solve;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use crnirenberg::audit::{summary, AuditReport};

use crate::config::{Overrides, RunConfig};
use crate::output::write_text;

#[derive(Parser, Debug)]
#[command(name = "crnir", version, about = "Numerics for the CR Nirenberg problem on the Heisenberg group")]
struct Cli {
    /// Complex dimension of H^n.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "crnir-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiplies every audit tolerance.
    #[arg(long = "tolerance-scale", global = true)]
    tolerance_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the audit battery; writes report.csv and summary.txt.
    Verify,
    /// Subcritical continuation; writes trace.csv, witness.toml and plot data.
    Solve,
    /// Parameter sweep; writes sweep.csv.
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    AuditFail,
    NoConvergence,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::AuditFail => 2,
            Outcome::NoConvergence => 3,
        }
    }
}

fn cmd_verify(rc: &RunConfig) -> Result<Outcome> {
    let battery = verify::Battery::from_config(rc)?;
    let reports = verify::run(&battery, rc.tolerance_scale);
    let mut csv = String::from(AuditReport::<f64>::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_text(&rc.out.join("report.csv"), &csv)?;
    let text = summary(&reports);
    write_text(&rc.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(if reports.iter().all(|r| r.pass) { Outcome::Pass } else { Outcome::AuditFail })
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let flags = Overrides { n: cli.n, seed: cli.seed, threads: cli.threads, tolerance_scale: cli.tolerance_scale };
    let rc = RunConfig::load(cli.config.as_deref(), cli.out.clone(), &flags)?;
    rayon::ThreadPoolBuilder::new().num_threads(rc.threads).build_global().context("cannot start thread pool")?;
    std::fs::create_dir_all(&rc.out).with_context(|| format!("cannot create {}", rc.out.display()))?;
    match cli.command {
        Command::Verify => cmd_verify(&rc),
        Command::Solve => solve::run(&rc),
        Command::Sweep => sweep::run(&rc),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(o) => ExitCode::from(o.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
