//! Inertial relaxed inexact Krasnoselskii-Mann iteration on the
//! forward-backward map:
//!
//! ```text
//! z^k     = v^k + tau (v^k - v^{k-1})
//! v^{k+1} = (1 - theta) z^k + theta (T_gamma(z^k) + delta_k)
//! ```
//!
//! stopped at the first `k >= 1` with `||v^{k+1} - z^k|| <= eps`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fb_engine::{fb_step, FBContext};
use crate::operators::{check_dim, is_finite, Point};

/// Strict upper bound on the inertia parameter.
pub const TAU_CAP: f64 = 0.999;

/// Default safeguard on the number of inner iterations.
pub const DEFAULT_K_MAX: usize = 100_000;

/// Slack allowed on the parameter inequality.
pub const INERTIA_TOL: f64 = 1e-12;

/// How the inexact forward-backward map is perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaModel {
    /// `delta_k = 0`.
    Exact,
    /// `||delta_k|| = d_k * eps` with `d_k ~ U[0, bound]` and a seeded random
    /// unit direction.
    ScaledRandom { bound: f64, seed: u64 },
    /// `||delta_k|| = magnitude / k`, a square-summable error sequence that does
    /// not depend on the stopping tolerance.
    Decaying { magnitude: f64, seed: u64 },
}

impl DeltaModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaModel::Exact => Ok(()),
            DeltaModel::ScaledRandom { bound, .. } if bound >= 0.0 && bound.is_finite() => Ok(()),
            DeltaModel::Decaying { magnitude, .. } if magnitude >= 0.0 && magnitude.is_finite() => {
                Ok(())
            }
            other => Err(Error::InvalidParameter(format!(
                "perturbation bound must be finite and >= 0: {other:?}"
            ))),
        }
    }

    /// `sup_k d_k` where `||delta_k|| = d_k * eps`.
    pub fn d_bound(&self, eps: f64) -> f64 {
        match *self {
            DeltaModel::Exact => 0.0,
            DeltaModel::ScaledRandom { bound, .. } => bound,
            DeltaModel::Decaying { magnitude, .. } => {
                if magnitude == 0.0 {
                    0.0
                } else {
                    magnitude / eps
                }
            }
        }
    }

    /// The perturbation injected at inner iteration `k`. Depends only on
    /// `(seed, k)`, so runs are reproducible.
    pub fn perturbation(&self, dim: usize, eps: f64, k: usize) -> Point {
        let (norm, seed) = match *self {
            DeltaModel::Exact => return Point::zeros(dim),
            DeltaModel::ScaledRandom { bound, seed } => {
                let mut rng = stream_rng(seed, k);
                let d: f64 = rng.gen::<f64>() * bound;
                (d * eps, seed)
            }
            DeltaModel::Decaying { magnitude, seed } => (magnitude / k.max(1) as f64, seed),
        };
        if norm == 0.0 {
            return Point::zeros(dim);
        }
        let mut rng = stream_rng(seed ^ 0x9e37_79b9_7f4a_7c15, k);
        loop {
            let u = Point::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let len = u.norm();
            if len > 1e-12 {
                return u * (norm / len);
            }
        }
    }
}

fn stream_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// `T_gamma(z) + delta_k`, returned together with `||delta_k||`.
pub fn perturbed_step(
    ctx: &FBContext,
    z: &Point,
    model: &DeltaModel,
    eps: f64,
    k: usize,
) -> Result<(Point, f64)> {
    let exact = fb_step(ctx, z)?;
    if let DeltaModel::Exact = model {
        return Ok((exact, 0.0));
    }
    let delta = model.perturbation(z.len(), eps, k);
    let norm = delta.norm();
    Ok((exact + delta, norm))
}

/// `Q = 1 - theta + 2 theta q^2`.
pub fn energy_rate(theta: f64, q: f64) -> f64 {
    1.0 - theta + 2.0 * theta * q * q
}

fn relaxation_slack(theta: f64) -> f64 {
    (1.0 - theta) / theta
}

/// Constant-parameter form of the inner-loop parameter inequality:
/// `Q tau (1 + tau) + lambda tau (1 - tau) - Q lambda (1 - tau)`, with
/// `lambda = (1 - theta) / theta`. The inequality holds iff this is `<= 0`.
pub fn inertia_residual(theta: f64, tau: f64, q: f64) -> f64 {
    let big_q = energy_rate(theta, q);
    let lambda = relaxation_slack(theta);
    big_q * tau * (1.0 + tau) + lambda * tau * (1.0 - tau) - big_q * lambda * (1.0 - tau)
}

/// Largest `tau` in `[0, TAU_CAP]` satisfying the parameter inequality.
///
/// The residual is the quadratic `(Q - lambda) tau^2 + (Q + lambda + Q lambda) tau - Q lambda`,
/// negative at 0 and equal to `2Q > 0` at 1, so it has exactly one root in
/// `[0, 1)`; the feasible set in `[0, 1)` is `[0, root]`.
pub fn select_tau(theta: f64, q: f64) -> f64 {
    let big_q = energy_rate(theta, q);
    let lambda = relaxation_slack(theta);
    let c = big_q * lambda;
    if !(c > 0.0) {
        return 0.0;
    }
    let a = big_q - lambda;
    let b = big_q + lambda + c;
    // Cancellation-free form of the root.
    let disc = (b * b + 4.0 * a * c).max(0.0);
    let mut tau = (2.0 * c / (b + disc.sqrt())).clamp(0.0, TAU_CAP);
    while tau > 0.0 && inertia_residual(theta, tau, q) > 0.0 {
        tau = tau.next_down();
    }
    tau
}

/// `eps / (theta (1 - q))`: distance of `z^K` to the fixed point once the
/// stopping criterion fires (exact model).
pub fn post_stop_bound(eps: f64, theta: f64, q: f64) -> f64 {
    eps / (theta * (1.0 - q))
}

/// Lyapunov energy
/// `V_k = ||v^k - u||^2 - tau ||v^{k-1} - u||^2 + lambda (1 - tau) ||v^k - v^{k-1}||^2`
/// evaluated on an iterate history `history[i] = v^i`.
pub fn lyapunov_energy(
    history: &[Point],
    u_bar: &Point,
    theta: f64,
    tau: f64,
    k: usize,
) -> Result<f64> {
    if k == 0 || history.len() <= k {
        return Err(Error::MissingHistory {
            needed: k.max(1),
            available: history.len(),
        });
    }
    let (prev, curr) = (&history[k - 1], &history[k]);
    check_dim(u_bar.len(), curr.len())?;
    Ok(energy(prev, curr, u_bar, theta, tau))
}

fn energy(prev: &Point, curr: &Point, u_bar: &Point, theta: f64, tau: f64) -> f64 {
    let lambda = relaxation_slack(theta);
    (curr - u_bar).norm_squared() - tau * (prev - u_bar).norm_squared()
        + lambda * (1.0 - tau) * (curr - prev).norm_squared()
}

/// Parameters of one inner run (constant `theta`, `tau`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerParams {
    pub theta: f64,
    pub tau: f64,
    pub eps: f64,
    pub k_max: usize,
    pub delta_model: DeltaModel,
}

impl InnerParams {
    pub fn new(
        theta: f64,
        tau: f64,
        eps: f64,
        k_max: usize,
        delta_model: DeltaModel,
    ) -> Result<Self> {
        let params = InnerParams {
            theta,
            tau,
            eps,
            k_max,
            delta_model,
        };
        params.validate()?;
        Ok(params)
    }

    /// `tau` from [`select_tau`] for the contraction factor of `ctx`.
    pub fn for_context(
        ctx: &FBContext,
        theta: f64,
        eps: f64,
        k_max: usize,
        delta_model: DeltaModel,
    ) -> Result<Self> {
        Self::new(theta, select_tau(theta, ctx.q()), eps, k_max, delta_model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in [0, 1), got {}",
                self.tau
            )));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eps must be finite and >= 0, got {}",
                self.eps
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be >= 1".into()));
        }
        self.delta_model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Criterion,
    Cap,
}

/// Per-iteration diagnostics for inner iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep {
    pub k: usize,
    /// `||v^{k+1} - z^k||`.
    pub residual: f64,
    /// `||delta_k||`.
    pub delta_norm: f64,
    /// `||v^{k+1} - u||` when a reference point is supplied.
    pub distance: Option<f64>,
    /// `V_{k+1}` when a reference point is supplied.
    pub energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    /// `v^{K+1}`.
    pub v_final: Point,
    /// `z^K`.
    pub z_final: Point,
    pub stop_k: usize,
    pub stopped_by: StopReason,
    pub trace: Vec<InnerStep>,
    /// `V_1` when a reference point is supplied.
    pub initial_energy: Option<f64>,
    /// `v^0, v^1, ..., v^{K+1}` when requested.
    pub iterates: Vec<Point>,
}

impl InnerResult {
    /// `V_1, V_2, ..., V_{K+1}` (empty without a reference point).
    pub fn energies(&self) -> Vec<f64> {
        self.initial_energy
            .into_iter()
            .chain(self.trace.iter().filter_map(|s| s.energy))
            .collect()
    }
}

/// What [`ikm_run_traced`] records besides the result.
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions<'a> {
    /// Reference point (normally the exact fixed point) for distance/energy.
    pub reference: Option<&'a Point>,
    pub record_steps: bool,
    pub keep_iterates: bool,
}

impl Default for TraceOptions<'_> {
    fn default() -> Self {
        TraceOptions {
            reference: None,
            record_steps: true,
            keep_iterates: false,
        }
    }
}

pub fn ikm_run(ctx: &FBContext, params: &InnerParams, v0: &Point) -> Result<InnerResult> {
    ikm_run_traced(ctx, params, v0, TraceOptions::default())
}

pub fn ikm_run_traced(
    ctx: &FBContext,
    params: &InnerParams,
    v0: &Point,
    opts: TraceOptions<'_>,
) -> Result<InnerResult> {
    params.validate()?;
    check_dim(ctx.dim(), v0.len())?;
    if !is_finite(v0) {
        return Err(Error::InvalidParameter(
            "initial point must be finite".into(),
        ));
    }
    if let Some(u) = opts.reference {
        check_dim(ctx.dim(), u.len())?;
    }
    let (theta, tau) = (params.theta, params.tau);
    let residual = inertia_residual(theta, tau, ctx.q());
    if residual > INERTIA_TOL {
        return Err(Error::InvalidParameter(format!(
            "parameter inequality violated: residual {residual:e} for theta={theta}, tau={tau}, q={}",
            ctx.q()
        )));
    }
    if energy_rate(theta, ctx.q()) >= 1.0 {
        log::debug!(
            "Q = {} >= 1 (theta={theta}, q={}): energy recursion is not contractive",
            energy_rate(theta, ctx.q()),
            ctx.q()
        );
    }

    let mut v_prev = v0.clone();
    let mut v = v0.clone();
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(v_prev.clone());
        iterates.push(v.clone());
    }
    let initial_energy = opts.reference.map(|u| energy(&v_prev, &v, u, theta, tau));

    let mut k = 1;
    loop {
        let z = &v + (&v - &v_prev) * tau;
        let (t_z, delta_norm) = perturbed_step(ctx, &z, &params.delta_model, params.eps, k)?;
        let v_next = &z * (1.0 - theta) + t_z * theta;
        let step_residual = (&v_next - &z).norm();
        if !step_residual.is_finite() {
            return Err(Error::NonFinite {
                t: 0,
                detail: format!("inner iterate became non-finite at k={k}"),
            });
        }
        if opts.record_steps {
            let (distance, energy) = match opts.reference {
                Some(u) => (
                    Some((&v_next - u).norm()),
                    Some(energy(&v, &v_next, u, theta, tau)),
                ),
                None => (None, None),
            };
            trace.push(InnerStep {
                k,
                residual: step_residual,
                delta_norm,
                distance,
                energy,
            });
        }
        if opts.keep_iterates {
            iterates.push(v_next.clone());
        }
        let stopped_by = if step_residual <= params.eps {
            Some(StopReason::Criterion)
        } else if k >= params.k_max {
            Some(StopReason::Cap)
        } else {
            None
        };
        if let Some(stopped_by) = stopped_by {
            return Ok(InnerResult {
                v_final: v_next,
                z_final: z,
                stop_k: k,
                stopped_by,
                trace,
                initial_energy,
                iterates,
            });
        }
        v_prev = std::mem::replace(&mut v, v_next);
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fb_engine::FBContext;
    use crate::operators::{point, LipschitzMap, PhiParams, ResolventMap};
    use crate::problems::make_zero_sum_game;

    #[test]
    fn residual_examples() {
        assert!((inertia_residual(0.5, 0.0, 0.5) + 0.75).abs() < 1e-15);
        let root = (10.0 - 88f64.sqrt()) / 2.0;
        assert!(inertia_residual(0.5, root, 0.5).abs() < 1e-14);
        for tau in [0.1, 0.5, 0.9] {
            let r = inertia_residual(1.0, tau, 0.5);
            let big_q = energy_rate(1.0, 0.5);
            assert!((r - big_q * tau * (1.0 + tau)).abs() < 1e-15);
            assert!(r > 0.0);
        }
    }

    #[test]
    fn select_tau_examples() {
        let tau = select_tau(0.5, 0.5);
        assert!((tau - 0.309_584_240_176_570_27).abs() < 1e-12, "{tau}");
        assert_eq!(select_tau(1.0, 0.5), 0.0);
        let q = (1.0 - 1.0 / 4.41f64).sqrt();
        let tau = select_tau(0.5, q);
        assert!(tau > 0.0);
        assert!(inertia_residual(0.5, tau, q) <= INERTIA_TOL);
    }

    #[test]
    fn select_tau_hits_cap_when_everything_is_feasible() {
        // Tiny Q: the root lies beyond the cap.
        let tau = select_tau(0.999_999, 0.0);
        assert!(tau <= TAU_CAP);
        assert!(inertia_residual(0.999_999, tau, 0.0) <= 0.0);
        let tau = select_tau(0.01, 1e-3);
        assert!(tau > 0.0 && tau <= TAU_CAP);
    }

    #[test]
    fn post_stop_bound_examples() {
        let q = 0.879_342_157_743_780_4;
        assert!((post_stop_bound(1e-6, 0.5, q) - 1.657_579_783_130_015e-5).abs() < 1e-15);
        assert_eq!(post_stop_bound(0.0, 0.5, q), 0.0);
        assert!((post_stop_bound(1e-3, 1.0, 0.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn lyapunov_examples() {
        let u = point(&[11.0, 10.0]);
        let hist = vec![u.clone(), u.clone()];
        assert_eq!(lyapunov_energy(&hist, &u, 0.5, 0.3, 1).unwrap(), 0.0);

        let hist = vec![point(&[1.0, 2.0]), point(&[3.0, -1.0])];
        let v = lyapunov_energy(&hist, &u, 1.0, 0.0, 1).unwrap();
        assert!((v - (&hist[1] - &u).norm_squared()).abs() < 1e-12);

        assert!(matches!(
            lyapunov_energy(&hist, &u, 0.5, 0.1, 2),
            Err(Error::MissingHistory { .. })
        ));
        assert!(lyapunov_energy(&hist, &u, 0.5, 0.1, 0).is_err());
    }

    fn game_ctx() -> FBContext {
        let p = make_zero_sum_game();
        FBContext::for_problem(
            &p,
            PhiParams::new(1.0, 1.0).unwrap(),
            point(&[0.0, 0.0]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn perturbed_step_models() {
        let ctx = game_ctx();
        let z = point(&[30.0, 20.0]);
        let exact = fb_step(&ctx, &z).unwrap();
        let (out, n) = perturbed_step(&ctx, &z, &DeltaModel::Exact, 1e-3, 1).unwrap();
        assert_eq!((out, n), (exact.clone(), 0.0));

        let zero = DeltaModel::ScaledRandom {
            bound: 0.0,
            seed: 5,
        };
        let (out, n) = perturbed_step(&ctx, &z, &zero, 1e-3, 1).unwrap();
        assert_eq!((out, n), (exact.clone(), 0.0));

        let model = DeltaModel::ScaledRandom {
            bound: 1.0,
            seed: 5,
        };
        for k in 1..=1000 {
            let (out, n) = perturbed_step(&ctx, &z, &model, 1e-3, k).unwrap();
            let dev = (&out - &exact).norm();
            assert!(dev <= 1e-3 * (1.0 + 1e-12), "k={k}: {dev}");
            // exact has entries ~20, so the subtraction loses ~1e-14.
            assert!((dev - n).abs() < 1e-13);
        }
    }

    #[test]
    fn perturbation_is_reproducible() {
        let model = DeltaModel::ScaledRandom {
            bound: 2.0,
            seed: 11,
        };
        assert_eq!(model.perturbation(3, 0.1, 7), model.perturbation(3, 0.1, 7));
        assert_ne!(model.perturbation(3, 0.1, 7), model.perturbation(3, 0.1, 8));
        let decay = DeltaModel::Decaying {
            magnitude: 1e-2,
            seed: 3,
        };
        assert!((decay.perturbation(2, 1.0, 4).norm() - 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn starting_at_fixed_point_stops_immediately() {
        // A = 0, F = 0, beta = 0: the fixed point is the anchor itself.
        let ctx = FBContext::new(
            ResolventMap::zero(2),
            LipschitzMap::zero(2),
            LipschitzMap::identity(2),
            PhiParams::new(1.0, 0.0).unwrap(),
            point(&[2.0, -1.0]),
            Some(0.5),
        )
        .unwrap();
        let params = InnerParams::for_context(&ctx, 0.5, 1e-12, 100, DeltaModel::Exact).unwrap();
        let res = ikm_run(&ctx, &params, &point(&[2.0, -1.0])).unwrap();
        assert_eq!(res.stop_k, 1);
        assert_eq!(res.stopped_by, StopReason::Criterion);
        assert_eq!(res.v_final, point(&[2.0, -1.0]));
    }

    #[test]
    fn loose_tolerance_stops_at_first_iterate() {
        let ctx = game_ctx();
        let params = InnerParams::for_context(&ctx, 0.5, 1e6, 100, DeltaModel::Exact).unwrap();
        let res = ikm_run(&ctx, &params, &point(&[30.0, 20.0])).unwrap();
        assert_eq!(res.stop_k, 1);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn cap_is_reported_not_raised() {
        let ctx = game_ctx();
        let params = InnerParams::for_context(&ctx, 0.5, 0.0, 3, DeltaModel::Exact).unwrap();
        let res = ikm_run(&ctx, &params, &point(&[60.0, 50.0])).unwrap();
        assert_eq!(res.stopped_by, StopReason::Cap);
        assert_eq!(res.stop_k, 3);
    }

    #[test]
    fn infeasible_inertia_is_rejected() {
        let ctx = game_ctx();
        let params = InnerParams::new(1.0, 0.5, 1e-6, 10, DeltaModel::Exact).unwrap();
        assert!(ikm_run(&ctx, &params, &point(&[30.0, 20.0])).is_err());
        assert!(InnerParams::new(0.0, 0.0, 1e-6, 10, DeltaModel::Exact).is_err());
        assert!(InnerParams::new(0.5, 1.0, 1e-6, 10, DeltaModel::Exact).is_err());
        assert!(InnerParams::new(0.5, 0.1, 1e-6, 0, DeltaModel::Exact).is_err());
    }
}
