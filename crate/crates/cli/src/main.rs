use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use switchback::{
    analyze, identify_m_search, optimal_design, optimal_design_bruteforce, realize_observed, risk_enumeration,
    risk_monte_carlo, run_study, worst_case_risk_closed_form, Design, Error, ExactTestConfig, ExperimentData,
    ExperimentSummary, ModelConfig, StudyConfig,
};

/// Environment variable holding the default worker thread count.
const THREADS_ENV: &str = "SWITCHBACK_THREADS";

#[derive(Parser)]
#[command(name = "switchback", version, about = "Design and analyze switchback experiments")]
struct Cli {
    /// Worker threads (defaults to $SWITCHBACK_THREADS, then the CPU count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Closed,
    Enum,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Print the minimax-optimal design as JSON.
    Design {
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        order: usize,
        /// Exhaustive search (horizon at most 14).
        #[arg(long)]
        brute_force: bool,
    },
    /// Risk of a design under an outcome model.
    Risk {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Outcome bound for the closed form; defaults to the model's bound.
        #[arg(long)]
        bound: Option<f64>,
    },
    /// Run one experiment and write its data as CSV.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate and test from experiment data.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 100_000)]
        exact_resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Infer the carryover order from per-order experiment summaries.
    Identify {
        #[arg(long)]
        summaries: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
    /// Run a simulation study and write its table as CSV.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn internal(context: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Internal(format!("{}: {e}", context.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| internal(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| Failure::Internal(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Failure::Internal(e.to_string()))
}

fn threads(cli: Option<usize>) -> CliResult<Option<usize>> {
    if cli.is_some() {
        return Ok(cli);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = threads(cli.threads)? {
        if n == 0 {
            return Err(Failure::Validation("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Design { horizon, order, brute_force } => {
            let design = if brute_force { optimal_design_bruteforce(horizon, order)? } else { optimal_design(horizon, order)? };
            print_json(&design)
        }
        Command::Risk { design, model, order, method, reps, seed, bound } => {
            let design: Design = read_json(&design)?;
            let model: ModelConfig = read_json(&model)?;
            let oracle = model.oracle(design.horizon())?;
            let report = match method {
                Method::Closed => {
                    let bound = bound.or(oracle.bound()).ok_or_else(|| {
                        Failure::Validation("closed-form risk needs --bound or a bounded worst-case model".into())
                    })?;
                    worst_case_risk_closed_form(&design, order, bound)?
                }
                Method::Enum => risk_enumeration(&design, &oracle, order)?,
                Method::Mc => risk_monte_carlo(&design, &oracle, order, reps, seed)?,
            };
            print_json(&report)
        }
        Command::Simulate { model, design, order, seed, out } => {
            let design: Design = read_json(&design)?;
            let model: ModelConfig = read_json(&model)?;
            let oracle = model.oracle(design.horizon())?;
            let path = design.sample_path(seed);
            let observed = realize_observed(&oracle, &path)?;
            let data = ExperimentData::new(design, order, path, observed)?;
            let file = File::create(&out).map_err(|e| internal(&out, e))?;
            data.write_csv(file)?;
            Ok(())
        }
        Command::Analyze { data, design, order, exact_resamples, seed, level } => {
            let design: Design = read_json(&design)?;
            let file = File::open(&data).map_err(|e| internal(&data, e))?;
            let data = ExperimentData::read_csv(BufReader::new(file), design, order).map_err(|e| match e {
                Error::Csv(e) => Failure::Validation(format!("{}: {e}", data.display())),
                e => e.into(),
            })?;
            print_json(&analyze(&data, &ExactTestConfig::new(exact_resamples, seed), level)?)
        }
        Command::Identify { summaries, alpha } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Failure::Validation(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            let mut list: Vec<ExperimentSummary> = read_json(&summaries)?;
            list.sort_by_key(|s| s.p);
            let candidates: Vec<usize> = list.iter().map(|s| s.p).collect();
            let outcome = identify_m_search(
                &candidates,
                |p| Ok(list.iter().find(|s| s.p == p).cloned().expect("candidate comes from the list")),
                alpha,
            )?;
            print_json(&outcome)
        }
        Command::Study { config, out } => {
            let cfg: StudyConfig = read_json(&config)?;
            let result = run_study(&cfg)?;
            fs::create_dir_all(&out).map_err(|e| internal(&out, e))?;
            let name = serde_json::to_value(cfg.study)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_else(|| "study".into());
            let path = out.join(format!("{name}.csv"));
            let file = File::create(&path).map_err(|e| internal(&path, e))?;
            result.write_csv(file)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
