//! Brute-force reference solution of the regularized subproblem by plain
//! Banach iteration of the exact forward-backward map.

use crate::error::{Error, Result};
use crate::fb_engine::{fb_step, FBContext};
use crate::operators::{PhiParams, Point};
use crate::problems::ProblemInstance;

pub const ORACLE_BUDGET: usize = 10_000_000;

/// Iterations without a new smallest step after which the iteration is
/// considered stalled at rounding level.
const STALL_WINDOW: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub point: Point,
    pub iterations: usize,
    pub q: f64,
    /// A-posteriori bound `q / (1 - q) * ||v^{k+1} - v^k||` on the distance to
    /// the exact fixed point (0 when the last step vanished).
    pub error_bound: f64,
    /// Stopped because rounding kept the step above the requested threshold.
    pub stalled: bool,
}

/// `u_{alpha,beta}(w)` to accuracy `tol`, started from the center of `dom(A)`
/// (or from `w` when the domain is unbounded).
pub fn oracle_fixed_point(
    problem: &ProblemInstance,
    alpha: f64,
    beta: f64,
    w: &Point,
    tol: f64,
) -> Result<Point> {
    let start = problem.domain().map_or_else(|| w.clone(), |bx| bx.center());
    oracle_from(problem, alpha, beta, w, tol, &start).map(|r| r.point)
}

pub fn oracle_from(
    problem: &ProblemInstance,
    alpha: f64,
    beta: f64,
    w: &Point,
    tol: f64,
    start: &Point,
) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "oracle tol must be > 0, got {tol}"
        )));
    }
    let ctx = FBContext::for_problem(problem, PhiParams::new(alpha, beta)?, w.clone(), None)?;
    let q = ctx.q();
    let threshold = if q == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - q) / q
    };

    let mut v = start.clone();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for k in 1..=ORACLE_BUDGET {
        let next = fb_step(&ctx, &v)?;
        let step = (&next - &v).norm();
        if !step.is_finite() {
            return Err(Error::NonFinite {
                t: 0,
                detail: format!("oracle iterate became non-finite at k={k}"),
            });
        }
        v = next;
        let done = |stalled| OracleResult {
            point: v.clone(),
            iterations: k,
            q,
            error_bound: if q == 0.0 { 0.0 } else { q / (1.0 - q) * step },
            stalled,
        };
        if step <= threshold || step == 0.0 {
            return Ok(done(false));
        }
        if step < best {
            best = step;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_WINDOW {
                let res = done(true);
                log::debug!(
                    "oracle stalled at k={k}, step {step:e}, bound {:e}",
                    res.error_bound
                );
                return Ok(res);
            }
        }
    }
    Err(Error::OracleBudget {
        budget: ORACLE_BUDGET,
        last_step: best,
    })
}
