use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use cartan_core::dsl::{self, LowerOptions};
use cartan_core::report::Report;
use cartan_core::tasks::{self, RunOptions, TaskKind};
use cartan_core::{corpus, DEFAULT_SEED};
use clap::{Args, Parser, Subcommand};

/// Cartan's equivalence method: structure functions, invariant chains,
/// classifying Lie algebroids and path development.
#[derive(Parser, Debug)]
#[command(name = "cartan-kit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every randomized check; recorded in the report.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Tolerance for tasks that do not set their own.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Random samples per check for tasks that do not set their own.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Highest order of the invariant chain.
    #[arg(long = "max-order", global = true)]
    max_order: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every task in the given files.
    Run { files: Vec<PathBuf> },
    /// Structure functions and the invariant chain of a coframe.
    Analyze { files: Vec<PathBuf> },
    /// Bracket and anchor axioms of an algebroid.
    #[command(name = "algebroid-check")]
    AlgebroidCheck { files: Vec<PathBuf> },
    /// Orbits, symmetry dimensions and isotropy classes.
    Isotropy { files: Vec<PathBuf> },
    /// The modular cocycle and its rescaling law.
    Modular { files: Vec<PathBuf> },
    /// Whether a coframe realizes an algebroid.
    #[command(name = "check-realization")]
    CheckRealization { files: Vec<PathBuf> },
    /// Local equivalence of two coframes at given points.
    Equiv { files: Vec<PathBuf> },
    /// Develop one coframe into another along a path.
    Develop { files: Vec<PathBuf> },
    /// Loop defect of a development.
    Monodromy { files: Vec<PathBuf> },
    /// Run a bundled example, or list them when no name is given.
    Examples { name: Option<String> },
}

struct Input {
    label: String,
    source: String,
}

fn read_inputs(files: &[PathBuf]) -> Result<Vec<Input>, String> {
    if files.is_empty() {
        return Err("no input files given".into());
    }
    files
        .iter()
        .map(|p| {
            fs::read_to_string(p)
                .map(|source| Input {
                    label: p.display().to_string(),
                    source,
                })
                .map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect()
}

fn run_inputs(inputs: &[Input], opts: &RunOptions) -> Result<Report, String> {
    let mut task_reports = Vec::new();
    for input in inputs {
        let at = |e: dsl::Diagnostic| format!("{}:{e}", input.label);
        let problem = dsl::load(&input.source, LowerOptions { seed: opts.seed }).map_err(at)?;
        let report = tasks::run(&problem, opts).map_err(at)?;
        task_reports.extend(report.tasks);
    }
    Ok(Report::new(opts.seed, opts.inputs.clone(), task_reports))
}

fn write_report(report: &Report, out: Option<&PathBuf>) -> Result<(), String> {
    let text = report.to_json();
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (inputs, filter) = match &cli.command {
        Command::Examples { name: None } => {
            for n in corpus::names() {
                println!("{n}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Examples { name: Some(n) } => match corpus::example(n) {
            Some(src) => (
                Ok(vec![Input {
                    label: format!("example:{n}"),
                    source: src.to_string(),
                }]),
                None,
            ),
            None => {
                let known: Vec<&str> = corpus::names().collect();
                (
                    Err(format!(
                        "unknown example `{n}` (available: {})",
                        known.join(", ")
                    )),
                    None,
                )
            }
        },
        Command::Run { files } => (read_inputs(files), None),
        Command::Analyze { files } => (read_inputs(files), Some(TaskKind::Analyze)),
        Command::AlgebroidCheck { files } => (read_inputs(files), Some(TaskKind::AlgebroidCheck)),
        Command::Isotropy { files } => (read_inputs(files), Some(TaskKind::Isotropy)),
        Command::Modular { files } => (read_inputs(files), Some(TaskKind::Modular)),
        Command::CheckRealization { files } => {
            (read_inputs(files), Some(TaskKind::CheckRealization))
        }
        Command::Equiv { files } => (read_inputs(files), Some(TaskKind::Equiv)),
        Command::Develop { files } => (read_inputs(files), Some(TaskKind::Develop)),
        Command::Monodromy { files } => (read_inputs(files), Some(TaskKind::Monodromy)),
    };
    let labels = match &cli.command {
        Command::Examples { name: Some(n) } => vec![format!("example:{n}")],
        Command::Examples { name: None } => Vec::new(),
        Command::Run { files }
        | Command::Analyze { files }
        | Command::AlgebroidCheck { files }
        | Command::Isotropy { files }
        | Command::Modular { files }
        | Command::CheckRealization { files }
        | Command::Equiv { files }
        | Command::Develop { files }
        | Command::Monodromy { files } => files.iter().map(|p| p.display().to_string()).collect(),
    };
    let g = &cli.opts;
    let opts = RunOptions {
        seed: g.seed,
        tol: g.tol,
        trials: g.trials,
        max_order: g.max_order,
        filter,
        inputs: labels.clone(),
    };
    let config_error = |msg: String| {
        eprintln!("error: {msg}");
        let _ = write_report(&Report::failed(g.seed, labels.clone(), msg), g.out.as_ref());
        ExitCode::from(2)
    };
    if let Some(t) = g.tol {
        if !(t > 0.0) {
            return config_error(format!("--tol must be positive, got {t}"));
        }
    }
    let report = match inputs.and_then(|i| run_inputs(&i, &opts)) {
        Ok(r) => r,
        Err(msg) => return config_error(msg),
    };
    if let Err(e) = write_report(&report, g.out.as_ref()) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    for t in report.tasks.iter().filter(|t| !t.pass) {
        match &t.error {
            Some(e) => eprintln!("FAIL {} {}: {e}", t.kind, t.name),
            None => {
                let failed: Vec<&str> = t
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.as_str())
                    .collect();
                eprintln!("FAIL {} {}: {}", t.kind, t.name, failed.join(", "));
            }
        }
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
