//! `mcqn`: experiments on multiclass queueing networks.
//!
//! Exit status: 0 all checks passed, 1 completed with check failures,
//! 2 configuration error, 3 runtime failure.

mod commands;
mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::{Artifact, Outcome};
use config::{ExperimentConfig, Overrides, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mcqn",
    version,
    about = "Simulate, integrate and certify multiclass queueing networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config replication count.
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Do not print the summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Simulate the stochastic network and record every event.
    Simulate,
    /// Integrate the fluid model from q0 and verify the result.
    Fluid,
    /// Check a stored fluid trajectory against the fluid equations.
    Verify,
    /// Scaled sample paths against the fluid solution.
    Scaling,
    /// Check a Lyapunov candidate against the fluid model.
    LyapunovCheck,
    /// Search for a linear Lyapunov certificate.
    Synthesize,
    /// Monte Carlo Foster-Lyapunov drift and return-time probes.
    Foster,
    /// Load, stability and certificate summary of a network.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fluid => "fluid",
            Command::Verify => "verify",
            Command::Scaling => "scaling",
            Command::LyapunovCheck => "lyapunov-check",
            Command::Synthesize => "synthesize",
            Command::Foster => "foster",
            Command::Report => "report",
        }
    }

    fn run(self, config: &ExperimentConfig) -> Result<Outcome, CliError> {
        match self {
            Command::Simulate => commands::simulate(config),
            Command::Fluid => commands::fluid(config),
            Command::Verify => commands::verify(config),
            Command::Scaling => commands::scaling(config),
            Command::LyapunovCheck => commands::lyapunov_check(config),
            Command::Synthesize => commands::synthesize(config),
            Command::Foster => commands::foster(config),
            Command::Report => commands::report(config),
        }
    }
}

fn stamped(mut value: Value, prov: &Provenance) -> Value {
    let prov = serde_json::to_value(prov).expect("serializes");
    match &mut value {
        Value::Object(map) => {
            map.insert("provenance".into(), prov);
            value
        }
        _ => json!({ "provenance": prov, "value": value }),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), contents).map_err(|e| CliError::Runtime(format!("writing {name}: {e}")))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

fn emit(cli: &Cli, prov: &Provenance, outcome: &Outcome) -> Result<(), CliError> {
    let name = cli.command.name();
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Runtime(format!("{}: {e}", cli.out.display())))?;
    for artifact in &outcome.artifacts {
        match artifact {
            Artifact::Csv(file, body) => write(&cli.out, file, &format!("{}\n{body}", prov.comment()))?,
            Artifact::Json(file, value) => write(&cli.out, file, &pretty(&stamped(value.clone(), prov)))?,
        }
    }
    let mut report = stamped(outcome.report.clone(), prov);
    report["command"] = name.into();
    report["passed"] = outcome.passed.into();
    write(&cli.out, &format!("{name}.json"), &pretty(&report))?;
    let mut text = format!("{}\nmcqn {name}\n", prov.comment());
    for line in &outcome.summary {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(if outcome.passed {
        "all checks passed\n"
    } else {
        "CHECK FAILURES\n"
    });
    write(&cli.out, "summary.txt", &text)?;
    if !cli.quiet {
        print!("{}", text.split_once('\n').map_or("", |(_, rest)| rest));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, (CliError, Option<Provenance>)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| (CliError::Config("--config is required".into()), None))?;
    let overrides = Overrides {
        seed: cli.seed,
        replications: cli.replications,
    };
    let config = ExperimentConfig::load(path, overrides).map_err(|e| (e, None))?;
    let prov = Provenance::of(&config);
    let outcome = cli.command.run(&config).map_err(|e| (e, Some(prov.clone())))?;
    emit(cli, &prov, &outcome).map_err(|e| (e, Some(prov.clone())))?;
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((e, prov)) => {
            let _ = writeln!(std::io::stderr(), "mcqn {}: {e}", cli.command.name());
            // machine-readable diagnostics, best effort
            if let Some(prov) = prov {
                let report = stamped(
                    json!({
                        "command": cli.command.name(),
                        "passed": false,
                        "error": { "kind": e.kind(), "message": e.to_string() },
                    }),
                    &prov,
                );
                if std::fs::create_dir_all(&cli.out).is_ok() {
                    let _ = write(&cli.out, &format!("{}.json", cli.command.name()), &pretty(&report));
                }
            }
            ExitCode::from(e.code())
        }
    }
}
