use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotigcv::harness::{emit_results, run_experiment, write_results, ExperimentConfig, OutputFormat};
use rotigcv::Error;

#[derive(Parser)]
#[command(name = "rotigcv", version, about = "Ridge risk estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write one row per (method, lambda, seed, resample).
    Run {
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        /// Seed range `a..b` (end exclusive) or `a..=b`, overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
        /// Multiplies n, p and inner dimensions.
        #[arg(long)]
        scale: Option<f64>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Config(format!("bad seed range `{s}`"));
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        return Ok((a..=b).collect());
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    Ok(vec![s.parse().map_err(|_| bad())?])
}

fn error_record(kind: &str, message: &str, seed: Option<u64>, resample: Option<u64>) -> String {
    serde_json::json!({ "error": kind, "message": message, "seed": seed, "resample": resample }).to_string()
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    format: OutputFormat,
    seeds: Option<String>,
    threads: Option<usize>,
    scale: Option<f64>,
) -> Result<bool, Error> {
    let mut cfg = ExperimentConfig::from_path(&config)?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(&s)?;
    }
    if let Some(f) = scale {
        cfg = cfg.scaled(f)?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    let output = pool.install(|| run_experiment(&cfg))?;
    for f in &output.failures {
        eprintln!("{}", error_record(&f.kind, &f.message, Some(f.seed), Some(f.resample)));
    }
    match out {
        Some(path) => emit_results(&output.rows, format, &path)?,
        None => write_results(&output.rows, format, std::io::stdout().lock())?,
    }
    Ok(output.failures.is_empty())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, format, seeds, threads, scale } => run(config, out, format, seeds, threads, scale),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string(), None, None));
            ExitCode::from(2)
        }
    }
}
