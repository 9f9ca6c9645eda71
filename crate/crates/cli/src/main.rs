use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conformal_jets_cli::report::{Record, Report};
use conformal_jets_cli::run::{run, run_task};
use conformal_jets_cli::scenario::{
    parse_scenario_with_seed, Format, Scenario, TargetSpec, TaskKind, TaskSpec, DEFAULT_HALF_WIDTH, DEFAULT_SEED,
};
use conformal_jets_cli::suites::{verify, verify_all, Context};
use conformal_jets_cli::Theorem;
use conformal_jets::zeros::Region;

/// Environment variable holding the default seed.
const SEED_ENV: &str = "CONFORMAL_JETS_SEED";

#[derive(Parser)]
#[command(name = "conformal-jets", version, about = "Zero sets and jet invariants of conformal vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a scenario file.
    Analyze {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a named verification suite, or `all`.
    Verify {
        theorem: String,
        /// Take the field and defaults from this scenario instead of the
        /// built-in fixture.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Decide conformal equivalence of two zeros.
    Compare {
        scenario_a: PathBuf,
        scenario_b: PathBuf,
        /// Zero of the first field, then of the second (comma separated).
        #[arg(long = "at", num_args = 1, required = true)]
        at: Vec<String>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        jets: u8,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Scenario {
        path: String,
        source: conformal_jets_cli::ScenarioError,
    },
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={s} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let wrap = |source| CliError::Scenario {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        wrap(conformal_jets_cli::ScenarioError::Parse(format!("cannot read file: {e}")))
    })?;
    parse_scenario_with_seed(&text, seed).map_err(wrap)
}

fn emit(report: &Report, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let text = match format {
        Format::Human => report.to_human(),
        Format::Machine => report.to_machine(),
    };
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("`{text}` is not a comma-separated point")))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool, CliError> {
    let default_seed = env_seed()?;
    match command {
        Command::Analyze {
            scenario,
            seed,
            tol,
            output,
        } => {
            let mut sc = load(&scenario, default_seed)?;
            if let Some(s) = seed {
                sc.defaults.seed = s;
                sc.tasks.iter_mut().for_each(|t| t.seed = Some(s));
            }
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(CliError::Usage("--tol must be positive".into()));
                }
                sc.defaults.tol = t;
                sc.tasks.iter_mut().for_each(|task| task.tol = Some(t));
            }
            let report = run(&sc, "analyze").map_err(|source| CliError::Scenario {
                path: scenario.display().to_string(),
                source,
            })?;
            let format = output.format.unwrap_or(sc.output.format);
            let out = output.out.or_else(|| sc.output.path.as_ref().map(PathBuf::from));
            emit(&report, format, out.as_deref())?;
            Ok(report.passed())
        }
        Command::Verify {
            theorem,
            scenario,
            seed,
            output,
        } => {
            let which: Vec<Theorem> = if theorem == "all" {
                Theorem::ALL.to_vec()
            } else {
                vec![Theorem::parse(&theorem).ok_or_else(|| {
                    let names: Vec<&str> = Theorem::ALL.iter().map(|t| t.as_str()).collect();
                    CliError::Usage(format!("unknown theorem `{theorem}`; expected all or one of {}", names.join(", ")))
                })?]
            };
            let sc = scenario.as_deref().map(|p| load(p, default_seed)).transpose()?;
            let seed = seed
                .or(sc.as_ref().map(|s| s.defaults.seed))
                .or(default_seed)
                .unwrap_or(DEFAULT_SEED);
            let ctx = match &sc {
                Some(s) => {
                    let field = s.build().map_err(|source| CliError::Scenario {
                        path: scenario.as_ref().expect("scenario given").display().to_string(),
                        source,
                    })?;
                    let n = field.dim();
                    Some(Context::new(
                        field,
                        Region::cube(n, DEFAULT_HALF_WIDTH),
                        s.defaults.grid,
                        s.defaults.tol,
                        s.defaults.budget,
                    ))
                }
                None => None,
            };
            let mut report = Report::default();
            report.push(Record::Environment {
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: format!("verify {theorem}"),
                seed,
                tol: ctx.as_ref().map_or(1e-9, |c| c.tol),
            });
            let outcomes = if which.len() == Theorem::ALL.len() {
                verify_all(ctx.as_ref(), seed)
            } else {
                which.iter().map(|&t| verify(t, ctx.as_ref(), seed)).collect()
            };
            for o in outcomes {
                report.push(Record::Suite(o));
            }
            report.finish();
            let format = output.format.unwrap_or_default();
            emit(&report, format, output.out.as_deref())?;
            Ok(report.passed())
        }
        Command::Compare {
            scenario_a,
            scenario_b,
            at,
            jets,
            output,
        } => {
            if at.len() != 2 {
                return Err(CliError::Usage("compare needs exactly two --at points".into()));
            }
            let a = load(&scenario_a, default_seed)?;
            let b = load(&scenario_b, default_seed)?;
            let field = a.build().map_err(|source| CliError::Scenario {
                path: scenario_a.display().to_string(),
                source,
            })?;
            let xa = parse_point(&at[0])?;
            let yb = parse_point(&at[1])?;
            for (p, n, which) in [(&xa, a.space.n, "first"), (&yb, b.space.n, "second")] {
                if p.len() != n {
                    return Err(CliError::Usage(format!("the {which} --at point needs {n} coordinates, found {}", p.len())));
                }
            }
            let mut task = TaskSpec::new(TaskKind::Equivalence);
            task.at = Some(xa);
            task.jets = Some(jets);
            task.tol = Some(a.defaults.tol);
            task.budget = Some(a.defaults.budget);
            task.seed = Some(a.defaults.seed);
            task.target = Some(TargetSpec {
                space: b.space.clone(),
                field: b.field.clone(),
                at: yb,
            });
            let mut report = Report::default();
            report.push(Record::Environment {
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: "compare".into(),
                seed: a.defaults.seed,
                tol: a.defaults.tol,
            });
            let (status, error, result, checks) = match run_task(&field, &task) {
                Ok((r, c)) => (conformal_jets_cli::report::TaskStatus::Ok, None, r, c),
                Err(e) => (conformal_jets_cli::report::TaskStatus::Error, Some(e.to_string()), serde_json::Value::Null, Vec::new()),
            };
            let equivalent = result.get("status").and_then(|s| s.as_str()) == Some("equivalent");
            report.push(Record::Task {
                index: 0,
                kind: TaskKind::Equivalence.as_str().into(),
                status,
                error,
                result,
                checks,
            });
            report.finish();
            emit(&report, output.format.unwrap_or_default(), output.out.as_deref())?;
            Ok(equivalent)
        }
    }
}
