//! `epinet` command-line front end.
//!
//! Every command reads one JSON scenario and writes its artifacts plus a
//! `report.json` into the output directory. Exit codes: 0 on success, 1 when
//! the scenario or the command line is invalid, 2 when a solver or the file
//! system fails.

mod commands;
mod report;
mod scenario;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::report::Output;
use crate::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "epinet",
    version,
    about = "Epidemic spreading on networks: thresholds, simulation, allocation and control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral radius, threshold verdict and extinction-time bound.
    Threshold(RunArgs),
    /// Exact stochastic simulation: extinction times and marginals.
    Simulate(RunArgs),
    /// Integrate a mean-field model and find its endemic state.
    Meanfield(RunArgs),
    /// Budget-constrained rate allocation by geometric programming.
    Allocate(RunArgs),
    /// Optimal control by forward-backward sweep.
    Optctrl(RunArgs),
    /// Mean-field against exact (and simulated) infection probabilities.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario's Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Threshold(a) => ("threshold", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Meanfield(a) => ("meanfield", a),
            Command::Allocate(a) => ("allocate", a),
            Command::Optctrl(a) => ("optctrl", a),
            Command::Compare(a) => ("compare", a),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad scenario; `field` is the path of the offending entry.
    Invalid {
        field: String,
        message: String,
    },
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn invalid(field: &str, message: String) -> Self {
        CliError::Invalid {
            field: field.to_string(),
            message,
        }
    }

    pub fn io(context: String, e: std::io::Error) -> Self {
        CliError::Runtime(anyhow::Error::new(e).context(context))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid { .. } => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid { field, message } => {
                write!(f, "invalid scenario: {field}: {message}")
            }
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn run(name: &str, args: &RunArgs) -> Result<report::RunReport, CliError> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if scenario.command() != name {
        return Err(CliError::invalid(
            "command",
            format!("scenario is for `{}`, not `{name}`", scenario.command()),
        ));
    }
    if let Some(seed) = args.seed {
        scenario.override_seed(seed);
    }
    let mut out = Output::new(&args.out)?;
    commands::dispatch(&scenario, &mut out)?;
    out.finish(&scenario)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (name, args) = cli.command.parts();
    let start = Instant::now();
    match run(name, args) {
        Ok(report) => {
            if !args.quiet {
                println!("{name}: done");
                for (k, v) in &report.headline {
                    println!("  {k} = {v}");
                }
                for n in &report.notes {
                    println!("  note: {n}");
                }
                for f in &report.outputs {
                    println!(
                        "  wrote {} ({} bytes)",
                        args.out.join(&f.path).display(),
                        f.bytes
                    );
                }
                eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
