use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nestvi::fb_engine::{merit, FBContext};
use nestvi::harness::{
    default_starts, oracle_fixed_point, run_experiment, sweep, validate_problem, DeltaSpec,
    RunConfig,
};
use nestvi::inner_loop::DEFAULT_K_MAX;
use nestvi::operators::{PhiParams, Point};
use nestvi::outer_loop::OuterConfig;
use nestvi::problems::by_name;
use nestvi::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nestvi",
    version,
    about = "Nested variational inequality solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the nested solver once and write trajectory CSV + summary JSON.
    Solve {
        #[arg(long, default_value = "zero_sum_game")]
        problem: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.55)]
        eta: f64,
        #[arg(long, default_value_t = 1e-3)]
        epsbar: f64,
        #[arg(long, default_value_t = 100)]
        outer_iters: usize,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        /// Comma-separated initial anchor; defaults to the center of dom(A).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        /// exact | scaled:<D> | decaying:<m>
        #[arg(long, default_value = "exact")]
        delta: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: usize,
        #[arg(long)]
        stop_tol: Option<f64>,
        #[arg(long, default_value = "run")]
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the alpha x start cross product described by a TOML config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check monotonicity, Lipschitz constants and schedule assumptions.
    Validate {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.55)]
        eta: f64,
        #[arg(long, default_value_t = 1e-3)]
        epsbar: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 100)]
        outer_iters: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reference solution of one regularized subproblem.
    Oracle {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchor: Vec<f64>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn fmt_point(p: &Point) -> String {
    p.iter()
        .map(|x| format!("{x:.12}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Solve {
            problem,
            alpha,
            eta,
            epsbar,
            outer_iters,
            theta,
            start,
            delta,
            seed,
            k_max,
            stop_tol,
            name,
            out,
        } => {
            let cfg = RunConfig {
                run_name: name,
                problem,
                alpha,
                eta,
                epsbar,
                outer_iters,
                theta,
                k_max,
                delta: delta.parse::<DeltaSpec>()?,
                seed,
                start,
                stop_tol,
                output: out,
                ..RunConfig::default()
            };
            let s = run_experiment(&cfg)?;
            println!("w_final: ({})", fmt_point(&s.w_final));
            if let Some(d) = s.dist_final {
                println!("dist_final: {d:.6e}");
            }
            println!(
                "outer rows: {}, inner iterations: {}, inner cap hits: {}",
                s.rows, s.total_inner_iters, s.inner_cap_hits
            );
            println!("wall time: {:.3} s", s.wall_time.as_secs_f64());
            println!(
                "wrote {} and {}",
                s.csv_path.display(),
                s.json_path.display()
            );
            Ok(true)
        }
        Command::Sweep { config } => {
            let base = RunConfig::from_file(&config)?;
            let problem = base.build_problem()?;
            let alphas = base.alphas.clone().unwrap_or_else(|| vec![base.alpha]);
            let starts: Vec<Point> = match &base.starts {
                Some(s) => s.iter().map(|p| Point::from_vec(p.clone())).collect(),
                None => default_starts(&problem),
            };
            let summary = sweep(&base, &alphas, &starts)?;
            for run in &summary.runs {
                match &run.outcome {
                    Ok(s) => println!(
                        "{}: alpha={} start=({}) dist_final={} inner={}",
                        run.run_name,
                        run.alpha,
                        fmt_point(&run.start),
                        s.dist_final.map_or("-".into(), |d| format!("{d:.6e}")),
                        s.total_inner_iters
                    ),
                    Err(e) => println!("{}: failed: {e}", run.run_name),
                }
            }
            println!("wrote {}", summary.table_path.display());
            Ok(summary.failures() == 0)
        }
        Command::Validate {
            problem,
            alpha,
            eta,
            epsbar,
            theta,
            outer_iters,
            samples,
            seed,
        } => {
            let p = by_name(&problem)?;
            let cfg = OuterConfig {
                alpha,
                eta,
                epsbar,
                theta,
                outer_iters,
                ..OuterConfig::new(nestvi::harness::default_start(&p))
            };
            let report = validate_problem(&p, &cfg, samples, seed)?;
            println!("{report}");
            Ok(report.passed())
        }
        Command::Oracle {
            problem,
            alpha,
            beta,
            anchor,
            tol,
        } => {
            let p = by_name(&problem)?;
            let w = Point::from_vec(anchor);
            if w.len() != p.dim() {
                return Err(Error::DimensionMismatch {
                    expected: p.dim(),
                    found: w.len(),
                });
            }
            let u = oracle_fixed_point(&p, alpha, beta, &w, tol)?;
            let ctx = FBContext::for_problem(&p, PhiParams::new(alpha, beta)?, w, None)?;
            println!("u: ({})", fmt_point(&u));
            println!("merit_norm: {:.3e}", merit(&ctx, &u)?.norm());
            Ok(true)
        }
    }
}
