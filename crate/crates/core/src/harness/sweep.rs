//! Cross-product parameter sweeps over `alpha` and the initial anchor.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::Point;

use super::config::RunConfig;
use super::run::{csv_err, csv_writer, fmt_f64, run_experiment, RunSummary};

pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

#[derive(Debug)]
pub struct SweepRun {
    pub run_name: String,
    pub alpha: f64,
    pub start: Point,
    pub outcome: Result<RunSummary>,
}

#[derive(Debug)]
pub struct SweepSummary {
    pub runs: Vec<SweepRun>,
    pub table_path: PathBuf,
}

impl SweepSummary {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Runs every `(alpha, start)` pair in parallel, then writes the aggregate
/// table. A failed run is recorded in the table and does not stop the others.
pub fn sweep(base: &RunConfig, alphas: &[f64], starts: &[Point]) -> Result<SweepSummary> {
    if alphas.is_empty() || starts.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one alpha and one start".into(),
        ));
    }
    let jobs: Vec<(usize, f64, usize, Point)> = alphas
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| {
            starts
                .iter()
                .enumerate()
                .map(move |(j, s)| (i, a, j, s.clone()))
        })
        .collect();

    let runs: Vec<SweepRun> = jobs
        .into_par_iter()
        .map(|(i, alpha, j, start)| {
            let mut cfg = base.clone();
            cfg.run_name = format!("{}_a{i}_s{j}", base.run_name);
            cfg.alpha = alpha;
            cfg.start = Some(start.iter().copied().collect());
            let outcome = run_experiment(&cfg);
            if let Err(e) = &outcome {
                log::warn!("run {} failed: {e}", cfg.run_name);
            }
            SweepRun {
                run_name: cfg.run_name,
                alpha,
                start,
                outcome,
            }
        })
        .collect();

    std::fs::create_dir_all(&base.output).map_err(|e| Error::io(&base.output, e))?;
    let table_path = base.output.join(SWEEP_SUMMARY_FILE);
    let dim = starts.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut writer = csv_writer(&table_path)?;
    let mut header = vec!["run_name".to_string(), "alpha".to_string()];
    header.extend((1..=dim).map(|i| format!("start_{i}")));
    header.extend(["status", "dist_final", "total_inner_iters", "error"].map(String::from));
    writer
        .write_record(&header)
        .map_err(|e| csv_err(&table_path, e))?;
    for run in &runs {
        let mut row = vec![run.run_name.clone(), fmt_f64(run.alpha)];
        row.extend((0..dim).map(|i| run.start.get(i).map(|x| fmt_f64(*x)).unwrap_or_default()));
        match &run.outcome {
            Ok(s) => row.extend([
                "ok".to_string(),
                s.dist_final.map(fmt_f64).unwrap_or_default(),
                s.total_inner_iters.to_string(),
                String::new(),
            ]),
            Err(e) => row.extend([
                "failed".to_string(),
                String::new(),
                String::new(),
                e.to_string(),
            ]),
        }
        writer
            .write_record(&row)
            .map_err(|e| csv_err(&table_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&table_path, e))?;
    Ok(SweepSummary { runs, table_path })
}
