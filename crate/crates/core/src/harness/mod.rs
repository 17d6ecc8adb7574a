//! Experiment runner: datasets, penalty sweeps for every method, exact and
//! Monte-Carlo oracle risks, and tabular output.

mod config;
mod oracle;
mod output;
mod run;

pub use config::{ArotiSettings, ExperimentConfig, LambdaGrid, Method, SpikeSource, TestMode, TestSpec};
pub use oracle::{oracle_risk, oracle_risk_mc, TestModel, TestSampler};
pub use output::{emit_results, parse_csv, write_results, OutputFormat, CSV_HEADER};
pub use run::{run_experiment, CellFailure, ResultRow, RunOutput};
