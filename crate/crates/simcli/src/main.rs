//! `se2sim`: run, verify and list SE(2) multi-robot scenarios.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use se2track::scenario::{builtin, BUILTIN};
use se2track::sim::{run, SimError, SimResult, Summary};
use se2track::{Scenario, ScenarioError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "se2sim", version, about = "Tracking, consensus and formation simulations on SE(2)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Integration step, seconds (overrides the scenario).
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated duration, seconds (overrides the scenario).
    #[arg(long)]
    duration: Option<f64>,
    /// Seed for randomized suites; scenario dynamics are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its CSV trajectory log.
    Run {
        /// Scenario file, or the name of a shipped scenario.
        scenario: String,
        /// Output directory for the CSV log.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate a scenario and check one summary metric against a tolerance.
    Verify {
        scenario: String,
        /// Metric name (see `examples`).
        #[arg(long)]
        check: String,
        /// Pass iff the metric is at most this value.
        #[arg(long)]
        tol: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the shipped scenarios and the metric names `verify` accepts.
    Examples,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Divergence(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Divergence(_) => EXIT_DIVERGENCE,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Divergence(m) | Failure::Verify(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) => Failure::Validation(e.to_string()),
            _ => Failure::Divergence(e.to_string()),
        }
    }
}

/// A path that exists is read from disk; otherwise a shipped scenario of
/// that name is used.
fn load(spec: &str, overrides: &Overrides) -> Result<Scenario, Failure> {
    let path = Path::new(spec);
    let mut s = if path.exists() {
        Scenario::load(path)?
    } else {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or(spec);
        match builtin(name) {
            Some(r) => r?,
            None => Scenario::load(path)?,
        }
    };
    if let Some(dt) = overrides.dt {
        s = s.with_dt(dt)?;
    }
    if let Some(d) = overrides.duration {
        s = s.with_duration(d)?;
    }
    Ok(s)
}

fn print_summary(s: &Scenario, r: &SimResult) {
    println!("scenario {} ({:?}, T = {} s, dt = {} s)", s.name, s.mode, s.duration, s.dt);
    for f in &r.summary.followers {
        let conv = f
            .convergence_time
            .map_or_else(|| "never".to_string(), |t| format!("{t:.3} s"));
        println!(
            "  node {}: err_pose {:.4e} -> {:.4e}, position {:.4e}, max|vy| {:.1e}, converged {}",
            f.node, f.initial_err_pose, f.terminal_err_pose, f.terminal_err_position, f.max_vy, conv
        );
    }
    let d = &r.summary.diagnostics;
    println!(
        "  diagnostics: law discrepancy {:.3e}, reference vy {:.3e}, offset rate {:.3e}",
        d.max_law_discrepancy, d.max_reference_vy, d.max_offset_rate
    );
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Examples => {
            for (name, _) in BUILTIN {
                println!("{name}");
            }
            println!("metrics: {}", Summary::METRICS.join(", "));
            Ok(())
        }
        Command::Run {
            scenario,
            out,
            overrides,
        } => {
            let s = load(&scenario, &overrides)?;
            let r = run(&s)?;
            fs::create_dir_all(&out).map_err(|e| Failure::Validation(format!("{}: {e}", out.display())))?;
            let file = s.output.clone().unwrap_or_else(|| format!("{}.csv", s.name));
            let path = out.join(file);
            let w = File::create(&path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            r.write_csv(BufWriter::new(w))
                .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            print_summary(&s, &r);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Verify {
            scenario,
            check,
            tol,
            overrides,
        } => {
            let s = load(&scenario, &overrides)?;
            if !Summary::METRICS.contains(&check.as_str()) {
                return Err(Failure::Validation(format!(
                    "unknown metric {check:?}; expected one of {}",
                    Summary::METRICS.join(", ")
                )));
            }
            let r = run(&s)?;
            let value = r.summary.metric(&check).expect("metric listed");
            if value <= tol {
                println!("PASS {}: {check} = {value:.6e} <= {tol}", s.name);
                Ok(())
            } else {
                Err(Failure::Verify(format!("FAIL {}: {check} = {value:.6e} > {tol}", s.name)))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own usage-error code (2) would read as a divergence
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
