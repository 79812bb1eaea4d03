//! Experiment harness: reference oracle, run configuration, trajectory
//! persistence and parameter sweeps.

mod config;
mod oracle;
mod run;
mod sweep;
mod validate;

pub use config::{default_start, default_starts, BilevelParams, DeltaSpec, RunConfig};
pub use oracle::{oracle_fixed_point, oracle_from, OracleResult, ORACLE_BUDGET};
pub use run::{csv_header, csv_row, fmt_f64, run_experiment, run_with_problem, RunSummary};
pub use sweep::{sweep, SweepRun, SweepSummary, SWEEP_SUMMARY_FILE};
pub use validate::{validate_problem, ValidationReport};
