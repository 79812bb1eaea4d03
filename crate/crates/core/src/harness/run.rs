//! Single runs: trajectory CSV plus summary JSON.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::inner_loop::StopReason;
use crate::operators::Point;
use crate::outer_loop::{NestedSolver, OuterRecord};
use crate::problems::ProblemInstance;

use super::config::RunConfig;

/// Lossless text form of a double: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&fmt_f64(x)).expect("formatted float is a JSON number"))
}

fn json_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, json_num)
}

fn json_point(p: &Point) -> Value {
    Value::Array(p.iter().copied().map(json_num).collect())
}

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t", "beta_t", "eps_t", "gamma_t", "q_t", "tau_t", "e_t", "inner_k",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    h.extend((1..=dim).map(|i| format!("w_{i}")));
    h.extend(["merit_norm", "dist_to_solution", "gamma_gap"].map(String::from));
    h
}

pub fn csv_row(r: &OuterRecord) -> Vec<String> {
    let mut row = vec![
        r.t.to_string(),
        fmt_f64(r.beta_t),
        fmt_f64(r.eps_t),
        fmt_f64(r.gamma_t),
        fmt_f64(r.q_t),
        fmt_f64(r.tau_t),
        fmt_f64(r.e_t),
        r.inner_k.to_string(),
    ];
    row.extend(r.w.iter().copied().map(fmt_f64));
    row.push(fmt_f64(r.merit_norm));
    row.push(r.dist_to_solution.map(fmt_f64).unwrap_or_default());
    row.push(r.gamma_gap.map(fmt_f64).unwrap_or_default());
    row
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_name: String,
    pub w_final: Point,
    pub dist_final: Option<f64>,
    pub total_inner_iters: usize,
    pub inner_cap_hits: usize,
    pub rows: usize,
    /// Not persisted, so output files stay byte-identical across runs.
    pub wall_time: Duration,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    run_name: &'a str,
    status: &'a str,
    error: Option<String>,
    problem: &'a str,
    alpha: Value,
    eta: Value,
    epsbar: Value,
    outer_iters: usize,
    theta: Value,
    k_max: usize,
    delta: String,
    seed: u64,
    start: Value,
    w_final: Value,
    dist_final: Value,
    total_inner_iters: usize,
    inner_cap_hits: usize,
    rows: usize,
    trajectory_csv: String,
}

struct Progress {
    w: Point,
    dist: Option<f64>,
    total_inner: usize,
    cap_hits: usize,
    rows: usize,
}

/// Runs the nested solver and writes `{output}/{run_name}.csv` and
/// `{output}/{run_name}.json`. On a solver error the rows produced so far and
/// an `aborted` summary are still written before the error is returned.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    run_with_problem(cfg, &cfg.build_problem()?)
}

/// [`run_experiment`] on a caller-built instance; `cfg.problem` is ignored.
pub fn run_with_problem(cfg: &RunConfig, problem: &ProblemInstance) -> Result<RunSummary> {
    let started = Instant::now();
    let outer = cfg.outer_config(problem);
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let csv_path = cfg.output.join(format!("{}.csv", cfg.run_name));
    let json_path = cfg.output.join(format!("{}.json", cfg.run_name));

    let mut progress = Progress {
        w: outer.w1.clone(),
        dist: problem.analytic_solution().map(|s| (&outer.w1 - s).norm()),
        total_inner: 0,
        cap_hits: 0,
        rows: 0,
    };
    let mut writer = csv_writer(&csv_path)?;
    writer
        .write_record(csv_header(problem.dim()))
        .map_err(|e| csv_err(&csv_path, e))?;

    let outcome = (|| -> Result<()> {
        let mut solver = NestedSolver::new(problem, outer.clone())?;
        while let Some(record) = solver.step()? {
            writer
                .write_record(csv_row(&record))
                .map_err(|e| csv_err(&csv_path, e))?;
            progress.total_inner += record.inner_k;
            progress.cap_hits += usize::from(record.stopped_by == StopReason::Cap);
            progress.rows += 1;
            progress.dist = record.dist_to_solution;
            progress.w = record.w;
        }
        Ok(())
    })();
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;
    drop(writer);

    let error = outcome.as_ref().err().map(ToString::to_string);
    let summary = SummaryJson {
        run_name: &cfg.run_name,
        status: if error.is_some() { "aborted" } else { "ok" },
        error,
        problem: problem.name(),
        alpha: json_num(cfg.alpha),
        eta: json_num(cfg.eta),
        epsbar: json_num(cfg.epsbar),
        outer_iters: cfg.outer_iters,
        theta: json_num(cfg.theta),
        k_max: cfg.k_max,
        delta: cfg.delta.to_string(),
        seed: cfg.seed,
        start: json_point(&outer.w1),
        w_final: json_point(&progress.w),
        dist_final: json_opt(progress.dist),
        total_inner_iters: progress.total_inner,
        inner_cap_hits: progress.cap_hits,
        rows: progress.rows,
        trajectory_csv: format!("{}.csv", cfg.run_name),
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::io(&json_path, std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    outcome?;

    Ok(RunSummary {
        run_name: cfg.run_name.clone(),
        w_final: progress.w,
        dist_final: progress.dist,
        total_inner_iters: progress.total_inner,
        inner_cap_hits: progress.cap_hits,
        rows: progress.rows,
        wall_time: started.elapsed(),
        csv_path,
        json_path,
    })
}
