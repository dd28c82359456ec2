//! `airfl`: configuration-driven experiment runner.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a
//! configuration error.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use airfl_core::baselines::brute_force_oracle;
use airfl_core::fltrain::{initial_channels, metrics_csv, train_on, RoundMetrics};
use airfl_core::pdd::{self, PddResult};
use airfl_core::{csv_real, Error};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{load, ExperimentConfig, InstanceConfig};

/// Caps the worker threads used by `simulate`.
const THREADS_ENV: &str = "AIRFL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "airfl", version, about = "Over-the-air federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every (scheme, seed) pair and write per-round CSV files.
    Simulate(Common),
    /// Solve one scheduling instance with PDD.
    Solve(Common),
    /// Compute the exact optimum of a small instance.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// `solve_result.json` written by `solve`; prints `r_pdd / r_opt`.
        #[arg(long)]
        solve_result: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed(s) in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Solve(c) => solve(&c),
        Command::Oracle { common, solve_result } => oracle(&common, solve_result.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Writes through a temporary sibling so readers never see partial files.
fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let name = path
        .file_name()
        .context("output path has no file name")?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(args: &Common) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    let threads = thread_cap()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let (pool, test) = cfg
        .train
        .data
        .load::<f64>()
        .map_err(|e| Failure::Runtime(anyhow::Error::new(e).context("loading MNIST")))?;
    create_dir(&out)?;

    let runs = cfg.runs();
    let job = |run: &airfl_core::TrainConfig64| -> Result<RoundMetrics<f64>, Failure> {
        let outcome = train_on(run, &pool, &test)?;
        let path = out.join(format!("{}_seed{}.csv", run.scheme.name(), run.seed));
        write_atomic(&path, &metrics_csv(&outcome.rounds))?;
        let last = outcome.rounds.last().cloned().expect("at least one round");
        println!(
            "{} seed {}: test accuracy {:.4}, {} selected, r {:.4e}",
            last.scheme, run.seed, last.test_acc, last.selected, last.r
        );
        Ok(last)
    };
    let finals: Vec<Result<RoundMetrics<f64>, Failure>> = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("starting worker threads")?
            .install(|| runs.par_iter().map(job).collect()),
        None => runs.par_iter().map(job).collect(),
    };
    let mut summary = String::from("scheme,seed,round,r,selected,eta,test_loss,test_acc,violation\n");
    for (run, last) in runs.iter().zip(finals) {
        let m = last?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{}",
            m.scheme,
            run.seed,
            m.round,
            csv_real(m.r),
            m.selected,
            csv_real(m.eta),
            csv_real(m.test_loss),
            csv_real(m.test_acc),
            csv_real(m.violation)
        );
    }
    write_atomic(&out.join("summary.csv"), &summary)?;
    Ok(())
}

fn mask(selection: &[bool]) -> String {
    selection.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn load_instance(args: &Common) -> Result<InstanceConfig, Failure> {
    let mut cfg: InstanceConfig = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn solve(args: &Common) -> Result<(), Failure> {
    let inst = load_instance(args)?;
    let train = inst.as_train();
    let channels = initial_channels(&train)?;
    let res = pdd::solve(&channels, &channels.sample_counts(), &train.ota, &train.pdd)?;
    println!("r {}", csv_real(res.r_value));
    println!(
        "selected {} ({} of {})",
        mask(&res.selection.binary),
        res.selected_count(),
        inst.users
    );
    println!("violation {}", csv_real(res.violation));
    println!(
        "iterations outer {} inner {} converged {}",
        res.outer_iterations, res.inner_iterations, res.converged
    );
    if let Some(out) = &args.out {
        create_dir(out)?;
        let json = serde_json::to_string_pretty(&res).context("serializing the result")?;
        write_atomic(&out.join("solve_result.json"), &json)?;
        if !res.diagnostics.is_empty() {
            write_atomic(&out.join("diagnostics.csv"), &res.diagnostics_csv())?;
        }
    }
    Ok(())
}

fn oracle(args: &Common, solve_result: Option<&Path>) -> Result<(), Failure> {
    let inst = load_instance(args)?;
    let train = inst.as_train();
    let channels = initial_channels(&train)?;
    let best = brute_force_oracle(&channels, &channels.sample_counts(), &train.ota, inst.oracle_step)?;
    println!("r {}", csv_real(best.r_value));
    println!(
        "selected {} ({} of {})",
        mask(&best.selection),
        best.selected_count(),
        inst.users
    );
    if let Some(path) = solve_result {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let res: PddResult<f64> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        println!("ratio {:.6}", res.r_value / best.r_value);
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        let json = serde_json::to_string_pretty(&best).context("serializing the optimum")?;
        write_atomic(&out.join("oracle_result.json"), &json)?;
    }
    Ok(())
}
