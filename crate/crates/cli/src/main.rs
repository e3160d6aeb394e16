//! `sphere-nls <subcommand> --config <path> [--force] [--workers K]`

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "sphere-nls", version, about = "Experiments for the Wick-ordered cubic NLS on the 2-sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the truncated flow and report conservation drifts.
    Simulate(Common),
    /// Difference table of successive truncations.
    Converge(Common),
    /// Unitarity, Wick cancellation and law checks of the shell operators.
    RaoVerify(Common),
    /// Build the ansatz ladder with its per-shell diagnostics.
    Ladder(Common),
    /// Empirical probes of the eigenfunction and restriction-norm estimates.
    MeasureNorms(Common),
    /// Monte Carlo moments of the random data.
    Ensemble(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::Simulate(c) => ("simulate", c),
            Command::Converge(c) => ("converge", c),
            Command::RaoVerify(c) => ("rao-verify", c),
            Command::Ladder(c) => ("ladder", c),
            Command::MeasureNorms(c) => ("measure-norms", c),
            Command::Ensemble(c) => ("ensemble", c),
        }
    }
}

fn execute(name: &str, common: &Common) -> Result<usize> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let dir = report::prepare_dir(&cfg, name, common.force)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = common.workers {
        pool = pool.num_threads(k);
    }
    let results = pool.build()?.install(|| experiments::run(name, &cfg, &dir))?;
    report::write_manifest(&dir, &cfg, name, &results)?;
    for r in &results {
        let status = if r.passed { "ok" } else { "FAILED" };
        match &r.error {
            Some(e) => println!("{status:>6}  {}  error: {e}", r.name),
            None => println!("{status:>6}  {}  {}", r.name, r.summary),
        }
    }
    println!("{}", dir.display());
    Ok(results.iter().filter(|r| !r.passed).count())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = cli.command.split();
    match execute(name, common) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} sub-experiment(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
