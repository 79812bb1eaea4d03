//! Tikhonov / accuracy schedules and the anchor-update outer iteration.

use crate::error::{Error, Result};
use crate::fb_engine::{default_stepsize, merit, FBContext};
use crate::inner_loop::{
    energy_rate, ikm_run_traced, select_tau, DeltaModel, InnerParams, StopReason, TraceOptions,
    DEFAULT_K_MAX,
};
use crate::operators::{check_dim, is_finite, lipschitz_bound, LipschitzMap, PhiParams, Point};
use crate::problems::ProblemInstance;

/// `beta_t = (t + 1)^{-eta}`.
pub fn beta_schedule(t: usize, eta: f64) -> f64 {
    ((t + 1) as f64).powf(-eta)
}

/// `eps_t = epsbar (t + 1)^{-2}`.
pub fn eps_schedule(t: usize, epsbar: f64) -> f64 {
    let s = (t + 1) as f64;
    epsbar / (s * s)
}

/// `e_t = (1 + theta_hi D)(1 + gamma_t L_t) / (alpha theta_lo) * eps_t`, the
/// guaranteed distance of the new anchor to the exact proximal point.
pub fn accuracy_e(
    theta_lo: f64,
    theta_hi: f64,
    d: f64,
    gamma_t: f64,
    lipschitz_t: f64,
    alpha: f64,
    eps_t: f64,
) -> f64 {
    (1.0 + theta_hi * d) * (1.0 + gamma_t * lipschitz_t) / (alpha * theta_lo) * eps_t
}

/// `<G(w_curr), solution - w_curr>`. `w_prev` only fixes which projection the
/// solution stands in for; with a known singleton it is unused.
pub fn gap_gamma(
    g: &LipschitzMap,
    _w_prev: &Point,
    w_curr: &Point,
    solution: &Point,
) -> Result<f64> {
    check_dim(w_curr.len(), solution.len())?;
    Ok(g.eval(w_curr)?.dot(&(solution - w_curr)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterConfig {
    pub alpha: f64,
    pub eta: f64,
    pub epsbar: f64,
    /// Number of outer iterations `T`; the loop runs `t = 1..T-1`.
    pub outer_iters: usize,
    pub theta: f64,
    pub delta_model: DeltaModel,
    pub w1: Point,
    pub k_max: usize,
    /// Early exit once `||w^{t+1} - w^t|| <= stop_tol`. Off by default.
    pub stop_tol: Option<f64>,
    /// Record `Gamma_t` when the problem has a known solution.
    pub record_gap: bool,
}

impl OuterConfig {
    /// `alpha = 1, eta = 0.55, epsbar = 1e-3, T = 100, theta = 0.5`, exact steps.
    pub fn new(w1: Point) -> Self {
        OuterConfig {
            alpha: 1.0,
            eta: 0.55,
            epsbar: 1e-3,
            outer_iters: 100,
            theta: 0.5,
            delta_model: DeltaModel::Exact,
            w1,
            k_max: DEFAULT_K_MAX,
            stop_tol: None,
            record_gap: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be finite and > 0, got {}", self.alpha));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.epsbar >= 0.0) || !self.epsbar.is_finite() {
            return bad(format!(
                "epsbar must be finite and >= 0, got {}",
                self.epsbar
            ));
        }
        if self.outer_iters == 0 {
            return bad("outer_iters must be >= 1".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if self.k_max == 0 {
            return bad("k_max must be >= 1".into());
        }
        if !is_finite(&self.w1) || self.w1.is_empty() {
            return bad("w1 must be a finite point of dimension >= 1".into());
        }
        if let Some(tol) = self.stop_tol {
            if !(tol > 0.0) {
                return bad(format!("stop_tol must be > 0, got {tol}"));
            }
        }
        self.delta_model.validate()
    }
}

/// Diagnostics for one outer iteration `t`. `w` is the new anchor `w^{t+1}`;
/// the merit, distance and gap all refer to it.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub t: usize,
    pub w: Point,
    pub beta_t: f64,
    pub eps_t: f64,
    pub gamma_t: f64,
    pub q_t: f64,
    pub tau_t: f64,
    pub e_t: f64,
    pub inner_k: usize,
    pub stopped_by: StopReason,
    /// `||G^gamma(w^{t+1})||` at `(alpha, beta_t, w^t)`.
    pub merit_norm: f64,
    pub dist_to_solution: Option<f64>,
    pub gamma_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowControlReport {
    pub horizon: usize,
    /// `sum_{t <= horizon} beta_t`.
    pub beta_partial_sum: f64,
    /// `sum_{horizon/2 < t <= horizon} beta_t`; stays bounded away from 0 iff not summable.
    pub beta_tail_sum: f64,
    pub beta_summable: bool,
    /// `max e_t / beta_t` over the tail half.
    pub tail_ratio_max: f64,
    pub tail_ratio_first: f64,
    pub tail_ratio_last: f64,
    pub ratio_not_decreasing: bool,
}

impl SlowControlReport {
    pub fn passed(&self) -> bool {
        !self.beta_summable && !self.ratio_not_decreasing
    }
}

/// Checks that `beta_t` is not summable and that `e_t / beta_t` decays.
///
/// `e_t` depends on `L_t = L_F + beta_t L_G + alpha`, hence the two constants.
pub fn validate_slow_control(
    cfg: &OuterConfig,
    lipschitz_f: f64,
    lipschitz_g: f64,
    horizon: usize,
) -> Result<SlowControlReport> {
    if horizon < 10 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be >= 10, got {horizon}"
        )));
    }
    let ratio = |t: usize| -> Result<f64> {
        let beta = beta_schedule(t, cfg.eta);
        let eps = eps_schedule(t, cfg.epsbar);
        let lip = lipschitz_bound(PhiParams::new(cfg.alpha, beta)?, lipschitz_f, lipschitz_g);
        let gamma = default_stepsize(cfg.alpha, lip);
        let d = cfg.delta_model.d_bound(eps);
        Ok(accuracy_e(cfg.theta, cfg.theta, d, gamma, lip, cfg.alpha, eps) / beta)
    };
    let beta_partial_sum: f64 = (1..=horizon).map(|t| beta_schedule(t, cfg.eta)).sum();
    let tail_start = horizon / 2 + 1;
    let beta_tail_sum: f64 = (tail_start..=horizon)
        .map(|t| beta_schedule(t, cfg.eta))
        .sum();
    let ratios = (tail_start..=horizon)
        .map(ratio)
        .collect::<Result<Vec<_>>>()?;
    let tail_ratio_max = ratios.iter().copied().fold(0.0, f64::max);
    let tail_ratio_first = ratios[0];
    let tail_ratio_last = *ratios.last().expect("nonempty tail");
    Ok(SlowControlReport {
        horizon,
        beta_partial_sum,
        beta_tail_sum,
        beta_summable: cfg.eta > 1.0,
        tail_ratio_max,
        tail_ratio_first,
        tail_ratio_last,
        ratio_not_decreasing: tail_ratio_max > 0.0 && tail_ratio_last >= tail_ratio_first,
    })
}

/// Outer iteration driven one step at a time, so callers can persist records
/// as they are produced.
#[derive(Debug)]
pub struct NestedSolver<'a> {
    problem: &'a ProblemInstance,
    cfg: OuterConfig,
    t: usize,
    w: Point,
    finished: bool,
    warned_rate: bool,
}

impl<'a> NestedSolver<'a> {
    pub fn new(problem: &'a ProblemInstance, cfg: OuterConfig) -> Result<Self> {
        cfg.validate()?;
        check_dim(problem.dim(), cfg.w1.len())?;
        if problem.theory_unbounded() {
            log::warn!(
                "{}: dom(A) is unbounded, convergence guarantees do not apply",
                problem.name()
            );
        }
        if cfg.eta > 1.0 {
            log::warn!("eta = {} > 1: beta_t is summable", cfg.eta);
        }
        let w = cfg.w1.clone();
        Ok(NestedSolver {
            problem,
            cfg,
            t: 1,
            w,
            finished: false,
            warned_rate: false,
        })
    }

    pub fn config(&self) -> &OuterConfig {
        &self.cfg
    }

    /// Current anchor `w^t`.
    pub fn anchor(&self) -> &Point {
        &self.w
    }

    pub fn is_finished(&self) -> bool {
        self.finished || self.t >= self.cfg.outer_iters
    }

    /// Runs outer iteration `t`, or returns `None` once `t = T` (or the
    /// optional early exit fired).
    pub fn step(&mut self) -> Result<Option<OuterRecord>> {
        if self.is_finished() {
            return Ok(None);
        }
        let t = self.t;
        let cfg = &self.cfg;
        let beta_t = beta_schedule(t, cfg.eta);
        let eps_t = eps_schedule(t, cfg.epsbar);
        let phi = PhiParams::new(cfg.alpha, beta_t)?;
        let ctx = FBContext::for_problem(self.problem, phi, self.w.clone(), None)?;
        let (gamma_t, q_t) = (ctx.gamma(), ctx.q());
        let tau_t = select_tau(cfg.theta, q_t);
        if !self.warned_rate && energy_rate(cfg.theta, q_t) >= 1.0 {
            log::warn!(
                "t={t}: Q = {:.6} >= 1 (q = {q_t:.6}), energy recursion is not contractive",
                energy_rate(cfg.theta, q_t)
            );
            self.warned_rate = true;
        }
        let params = InnerParams::new(cfg.theta, tau_t, eps_t, cfg.k_max, cfg.delta_model)?;
        let opts = TraceOptions {
            record_steps: false,
            ..TraceOptions::default()
        };
        let inner = ikm_run_traced(&ctx, &params, &self.w, opts).map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite { t, detail },
            other => other,
        })?;
        let w_next = inner.v_final;
        if !is_finite(&w_next) {
            return Err(Error::NonFinite {
                t,
                detail: "new anchor is not finite".into(),
            });
        }
        if inner.stopped_by == StopReason::Cap {
            log::warn!(
                "t={t}: inner loop hit k_max = {} before eps_t = {eps_t:e}",
                cfg.k_max
            );
        }

        let merit_norm = merit(&ctx, &w_next)?.norm();
        let solution = self.problem.analytic_solution();
        let dist_to_solution = solution.map(|s| (&w_next - s).norm());
        let gamma_gap = match solution {
            Some(s) if cfg.record_gap => Some(gap_gamma(self.problem.g(), &self.w, &w_next, s)?),
            _ => None,
        };
        let e_t = accuracy_e(
            cfg.theta,
            cfg.theta,
            cfg.delta_model.d_bound(eps_t),
            gamma_t,
            ctx.lipschitz(),
            cfg.alpha,
            eps_t,
        );
        let moved = (&w_next - &self.w).norm();
        if let Some(tol) = cfg.stop_tol {
            if moved <= tol {
                log::info!("t={t}: anchor moved {moved:e} <= {tol:e}, stopping early");
                self.finished = true;
            }
        }

        let record = OuterRecord {
            t,
            w: w_next.clone(),
            beta_t,
            eps_t,
            gamma_t,
            q_t,
            tau_t,
            e_t,
            inner_k: inner.stop_k,
            stopped_by: inner.stopped_by,
            merit_norm,
            dist_to_solution,
            gamma_gap,
        };
        self.w = w_next;
        self.t += 1;
        Ok(Some(record))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedResult {
    pub w_final: Point,
    pub trajectory: Vec<OuterRecord>,
}

pub fn solve_nested(problem: &ProblemInstance, cfg: &OuterConfig) -> Result<NestedResult> {
    let mut solver = NestedSolver::new(problem, cfg.clone())?;
    let mut trajectory = Vec::with_capacity(cfg.outer_iters.saturating_sub(1));
    while let Some(record) = solver.step()? {
        trajectory.push(record);
    }
    Ok(NestedResult {
        w_final: solver.w,
        trajectory,
    })
}
