use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use coarse_osc::continuation::Termination;
use coarse_osc::Error;

mod config;
mod output;
mod recipes;
mod tasks;

use config::{ConfigError, ExperimentConfig, Task};
use output::Report;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_BREAKDOWN: u8 = 4;

#[derive(Parser)]
#[command(
    name = "coarse-osc",
    version,
    about = "Coarse-grained analysis of a forced oscillator network"
)]
struct Cli {
    /// TOML configuration file; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `numerics.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Field override such as `model.beta=0.3`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plain simulation, restricted to chaos coefficients.
    Simulate,
    /// Angular frequency of the isolated oscillator against phi.
    FreqSweep,
    /// State against mu, with the chaos fit.
    Correlate,
    /// Coarse projective integration next to direct integration.
    Project,
    /// Wall-clock speedup of projective integration.
    Speedup,
    /// Newton solve for a coarse fixed point.
    FixedPoint,
    /// One-parameter continuation of coarse fixed points.
    Branch,
    /// Two-parameter continuation of a fold.
    FoldCurve,
    /// Two-parameter continuation of a Neimark-Sacker point.
    HopfCurve,
    /// Synchrony classification over a grid of (beta, omega).
    SyncScan,
    /// Phase-slip period near a tongue boundary.
    Walkthrough,
    /// Run the task named in the configuration file.
    Run,
    /// Run canned experiment 1 to 12 with its built-in configuration.
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=12))]
        experiment: u8,
        /// Much smaller networks and shorter runs, for smoke testing.
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    fn task(&self) -> Option<Task> {
        Some(match self {
            Command::Simulate => Task::Simulate,
            Command::FreqSweep => Task::FreqSweep,
            Command::Correlate => Task::Correlate,
            Command::Project => Task::Project,
            Command::Speedup => Task::Speedup,
            Command::FixedPoint => Task::FixedPoint,
            Command::Branch => Task::Branch,
            Command::FoldCurve => Task::FoldCurve,
            Command::HopfCurve => Task::HopfCurve,
            Command::SyncScan => Task::SyncScan,
            Command::Walkthrough => Task::Walkthrough,
            Command::Run | Command::Reproduce { .. } => return None,
        })
    }
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "error": "config", "path": e.path, "message": e.message })
    );
    ExitCode::from(EXIT_CONFIG)
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_)
        | Error::UnsupportedRegime(_)
        | Error::IllPosedRestriction { .. } => EXIT_CONFIG,
        Error::MemberFailure { source, .. } => error_code(source),
        _ => EXIT_NUMERICAL,
    }
}

fn termination_code(t: &Termination) -> u8 {
    match t {
        Termination::PhysicsBreakdown { .. } => EXIT_BREAKDOWN,
        Termination::NumericalFailure { .. } => EXIT_NUMERICAL,
        _ => 0,
    }
}

/// Runs one task and writes its files. Returns the exit code.
fn execute(task: Task, cfg: &ExperimentConfig, dir: &Path) -> u8 {
    let mut report = Report::new(task.name());
    let config_json = serde_json::to_value(cfg).expect("config serializes");
    let outcome = tasks::run(task, cfg, &mut report);
    let code = match &outcome {
        Ok(()) => report
            .terminations
            .iter()
            .map(|(_, t)| termination_code(t))
            .max()
            .unwrap_or(0),
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": "task", "kind": format!("{e:?}").split([' ', '(', '{']).next(), "message": e.to_string() })
            );
            report.note("error", e.to_string());
            error_code(e)
        }
    };
    // partial tables of a failed run still describe what happened
    if outcome.is_ok() || !report.tables.is_empty() {
        match report.write(dir, &config_json) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
            }
            Err(e) => {
                eprintln!("{}", json!({ "error": "io", "message": e.to_string() }));
                return EXIT_NUMERICAL.max(code);
            }
        }
    }
    for (what, t) in &report.terminations {
        if termination_code(t) != 0 {
            eprintln!(
                "{}",
                json!({ "termination": output::termination_json(t), "curve": what })
            );
        }
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            return config_failure(&ConfigError {
                path: "--threads".into(),
                message: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool set once");
    }
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                return config_failure(&ConfigError {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })
            }
        },
        None => String::new(),
    };
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("numerics.seed={s}"));
    }

    if let Command::Reproduce { experiment, quick } = cli.command {
        let root = cli
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(format!("exp{experiment}"));
        let mut code = 0;
        for r in recipes::recipes(experiment, quick).expect("range checked by clap") {
            let mut cfg = r.config;
            if let Some(s) = cli.seed {
                cfg.numerics.seed = s;
            }
            code = code.max(execute(r.task, &cfg, &root.join(&r.label)));
        }
        return ExitCode::from(code);
    }

    let mut cfg = match config::load(&text, &overrides) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    let task = match cli.command.task().or(cfg.task) {
        Some(t) => t,
        None => {
            return config_failure(&ConfigError {
                path: "task".into(),
                message: "no task given on the command line or in the config".into(),
            })
        }
    };
    cfg.task = Some(task);
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    ExitCode::from(execute(task, &cfg, &dir))
}
