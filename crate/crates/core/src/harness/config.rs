//! Run configuration and its TOML file form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inner_loop::{DeltaModel, DEFAULT_K_MAX};
use crate::operators::{BoxSet, Point};
use crate::outer_loop::OuterConfig;
use crate::problems::{by_name, make_simple_bilevel, ProblemInstance};

/// Perturbation kind as written on the command line or in a config file:
/// `exact`, `scaled:<D>` or `decaying:<magnitude>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    Exact,
    Scaled(f64),
    Decaying(f64),
}

impl DeltaSpec {
    pub fn model(self, seed: u64) -> DeltaModel {
        match self {
            DeltaSpec::Exact => DeltaModel::Exact,
            DeltaSpec::Scaled(bound) => DeltaModel::ScaledRandom { bound, seed },
            DeltaSpec::Decaying(magnitude) => DeltaModel::Decaying { magnitude, seed },
        }
    }
}

impl FromStr for DeltaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "exact" {
            return Ok(DeltaSpec::Exact);
        }
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .ok_or_else(|| Error::Config(format!("bad perturbation bound in `{s}`")))
        };
        match s.split_once(':') {
            Some(("scaled", v)) => Ok(DeltaSpec::Scaled(parse(v)?)),
            Some(("decaying", v)) => Ok(DeltaSpec::Decaying(parse(v)?)),
            _ => Err(Error::Config(format!(
                "unknown perturbation `{s}` (expected exact, scaled:<D> or decaying:<m>)"
            ))),
        }
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Exact => write!(f, "exact"),
            DeltaSpec::Scaled(d) => write!(f, "scaled:{d}"),
            DeltaSpec::Decaying(m) => write!(f, "decaying:{m}"),
        }
    }
}

impl<'de> Deserialize<'de> for DeltaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of a custom simple bilevel instance.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilevelParams {
    /// Row-major `B`.
    pub matrix: Vec<Vec<f64>>,
    pub vector: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BilevelParams {
    pub fn build(&self) -> Result<ProblemInstance> {
        let rows = self.matrix.len();
        let cols = self.matrix.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.matrix.iter().any(|r| r.len() != cols) {
            return Err(Error::Config(
                "matrix must be a nonempty rectangular array".into(),
            ));
        }
        let b = DMatrix::from_row_iterator(rows, cols, self.matrix.iter().flatten().copied());
        let bx = BoxSet::new(
            Point::from_vec(self.lower.clone()),
            Point::from_vec(self.upper.clone()),
        )?;
        make_simple_bilevel(b, Point::from_vec(self.vector.clone()), bx)
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_name: String,
    pub problem: String,
    pub bilevel: Option<BilevelParams>,
    pub alpha: f64,
    pub eta: f64,
    pub epsbar: f64,
    pub outer_iters: usize,
    pub theta: f64,
    pub k_max: usize,
    pub delta: DeltaSpec,
    pub seed: u64,
    /// Initial anchor; defaults to the center of `dom(A)` (or the origin).
    pub start: Option<Vec<f64>>,
    pub stop_tol: Option<f64>,
    pub output: PathBuf,
    pub record_gap: bool,
    /// Sweep axes; ignored by a single run.
    pub alphas: Option<Vec<f64>>,
    pub starts: Option<Vec<Vec<f64>>>,
}

impl Default for RunConfig {
    /// The game benchmark with `alpha = 1, eta = 0.55, epsbar = 1e-3, T = 100,
    /// theta = 0.5` from `(30, 20)`.
    fn default() -> Self {
        RunConfig {
            run_name: "run".into(),
            problem: "zero_sum_game".into(),
            bilevel: None,
            alpha: 1.0,
            eta: 0.55,
            epsbar: 1e-3,
            outer_iters: 100,
            theta: 0.5,
            k_max: DEFAULT_K_MAX,
            delta: DeltaSpec::Exact,
            seed: 0,
            start: Some(vec![30.0, 20.0]),
            stop_tol: None,
            output: PathBuf::from("out"),
            record_gap: true,
            alphas: None,
            starts: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn build_problem(&self) -> Result<ProblemInstance> {
        match &self.bilevel {
            Some(params) if matches!(self.problem.as_str(), "simple_bilevel" | "bilevel") => {
                params.build()
            }
            Some(_) => Err(Error::Config(format!(
                "`bilevel` parameters given for problem `{}`",
                self.problem
            ))),
            None => by_name(&self.problem),
        }
    }

    pub fn delta_model(&self) -> DeltaModel {
        self.delta.model(self.seed)
    }

    pub fn start_point(&self, problem: &ProblemInstance) -> Point {
        match &self.start {
            Some(s) => Point::from_vec(s.clone()),
            None => default_start(problem),
        }
    }

    pub fn outer_config(&self, problem: &ProblemInstance) -> OuterConfig {
        OuterConfig {
            alpha: self.alpha,
            eta: self.eta,
            epsbar: self.epsbar,
            outer_iters: self.outer_iters,
            theta: self.theta,
            delta_model: self.delta_model(),
            w1: self.start_point(problem),
            k_max: self.k_max,
            stop_tol: self.stop_tol,
            record_gap: self.record_gap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_name.is_empty()
            || self.run_name.contains(['/', '\\'])
            || self.run_name.starts_with('.')
        {
            return Err(Error::Config(format!(
                "invalid run_name `{}`",
                self.run_name
            )));
        }
        let problem = self.build_problem()?;
        self.outer_config(&problem).validate()?;
        crate::operators::check_dim(problem.dim(), self.start_point(&problem).len())
    }
}

pub fn default_start(problem: &ProblemInstance) -> Point {
    problem
        .domain()
        .map_or_else(|| Point::zeros(problem.dim()), |bx| bx.center())
}

/// Corners of a 2-D box plus its center; other dimensions get the center only.
pub fn default_starts(problem: &ProblemInstance) -> Vec<Point> {
    match problem.domain() {
        Some(bx) if bx.dim() == 2 => {
            let (lo, hi) = (bx.lower(), bx.upper());
            vec![
                Point::from_vec(vec![lo[0], lo[1]]),
                Point::from_vec(vec![lo[0], hi[1]]),
                Point::from_vec(vec![hi[0], lo[1]]),
                Point::from_vec(vec![hi[0], hi[1]]),
                bx.center(),
            ]
        }
        _ => vec![default_start(problem)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::point;
    use crate::problems::make_zero_sum_game;

    #[test]
    fn delta_spec_round_trip() {
        for s in ["exact", "scaled:1", "scaled:0.25", "decaying:0.001"] {
            let d: DeltaSpec = s.parse().unwrap();
            assert_eq!(d.to_string().parse::<DeltaSpec>().unwrap(), d);
        }
        assert!("scaled:-1".parse::<DeltaSpec>().is_err());
        assert!("scaled".parse::<DeltaSpec>().is_err());
        assert!("noisy:1".parse::<DeltaSpec>().is_err());
        assert_eq!(
            DeltaSpec::Scaled(2.0).model(5),
            DeltaModel::ScaledRandom {
                bound: 2.0,
                seed: 5
            }
        );
    }

    #[test]
    fn parses_toml_with_defaults() {
        let cfg = RunConfig::from_toml_str(
            "run_name = \"a\"\nalpha = 10.0\ndelta = \"scaled:1\"\nseed = 3\nstart = [11.0, 50.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.alpha, 10.0);
        assert_eq!(cfg.outer_iters, 100);
        assert_eq!(
            cfg.delta_model(),
            DeltaModel::ScaledRandom {
                bound: 1.0,
                seed: 3
            }
        );
        let p = cfg.build_problem().unwrap();
        assert_eq!(cfg.outer_config(&p).w1, point(&[11.0, 50.0]));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = RunConfig::from_toml_str("alpha = 1.0\nbogus = 2\n").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("bogus")),
            "{err}"
        );
        assert!(RunConfig::from_toml_str("delta = \"wild\"").is_err());
    }

    #[test]
    fn custom_bilevel() {
        let cfg = RunConfig::from_toml_str(
            "problem = \"simple_bilevel\"\nstart = [0.0, 0.0]\n[bilevel]\nmatrix = [[1.0, 0.0], [0.0, 0.0]]\nvector = [1.0, 0.0]\nlower = [-2.0, -2.0]\nupper = [2.0, 2.0]\n",
        )
        .unwrap();
        let p = cfg.build_problem().unwrap();
        assert!((p.analytic_solution().unwrap() - point(&[1.0, 0.0])).norm() < 1e-12);

        let mut wrong = cfg.clone();
        wrong.problem = "zero_sum_game".into();
        assert!(wrong.build_problem().is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.start = Some(vec![1.0]);
        assert!(cfg.validate().is_err());
        cfg.start = None;
        cfg.run_name = "../x".into();
        assert!(cfg.validate().is_err());
        cfg.run_name = "ok".into();
        cfg.problem = "nope".into();
        assert!(matches!(cfg.validate(), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn default_start_set() {
        let starts = default_starts(&make_zero_sum_game());
        assert_eq!(starts.len(), 5);
        assert_eq!(starts[0], point(&[11.0, 10.0]));
        assert_eq!(starts[3], point(&[60.0, 50.0]));
        assert_eq!(starts[4], point(&[35.5, 30.0]));
    }
}
