//! `nonholo`: simulate constrained systems and check conservation laws.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nonholo_core::{Error, ErrorClass};

use commands::{Outcome, RunConfig, Source};

#[derive(Debug, Parser)]
#[command(
    name = "nonholo",
    version,
    about = "Nonholonomic Lagrangian dynamics and conservation checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate from the scenario's initial state and write the trajectory.
    Simulate(Common),
    /// Check a candidate field as a nonholonomic Noether symmetry.
    Noether {
        /// Name of a field declared in the scenario.
        field: String,
        #[command(flatten)]
        common: Common,
    },
    /// Check a scalar integral or a tensor integral.
    Integral {
        /// Name of an integral or tensor declared in the scenario.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Adapted-frame residuals, kernel dimension and derived-flag ranks.
    Frame(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct SourceArgs {
    /// Built-in scenario name.
    #[arg(long, value_name = "NAME", group = "source")]
    builtin: Option<String>,
    /// Path to a scenario JSON file.
    #[arg(long, value_name = "PATH", group = "source")]
    scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Common {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long = "t-end", value_name = "F", value_parser = positive_f64)]
    t_end: Option<f64>,
    #[arg(long, value_name = "F", value_parser = positive_f64)]
    step: Option<f64>,
    #[arg(long, value_name = "N", default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Defaults to the scenario's seed (42 unless it declares one).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Defaults to the scenario's tolerance (1e-9 unless it declares one).
    #[arg(long, value_name = "F", value_parser = positive_f64)]
    tol: Option<f64>,
    /// Re-project velocities onto the distribution after every step.
    #[arg(long = "project-drift")]
    project_drift: bool,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive finite number, got {s}"))
    }
}

impl Common {
    fn config(self, command: &'static str) -> RunConfig {
        let source = match (self.source.builtin, self.source.scenario) {
            (Some(name), None) => Source::Builtin(name),
            (None, Some(path)) => Source::File(path),
            _ => unreachable!("clap enforces exactly one source"),
        };
        RunConfig {
            command,
            source,
            t_end: self.t_end,
            step: self.step,
            samples: self.samples as usize,
            seed: self.seed,
            tol: self.tol,
            project_drift: self.project_drift,
            output: self.output,
            format: self.format,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 2,
        ErrorClass::Io => 3,
        ErrorClass::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c.config("simulate")),
        Command::Noether { field, common } => commands::noether(&common.config("noether"), &field),
        Command::Integral { name, common } => commands::integral(&common.config("integral"), &name),
        Command::Frame(c) => commands::frame(&c.config("frame")),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
