//! Forward-backward map `T_gamma(v) = J_{gamma A}(v - gamma Phi(v, w))`, its
//! merit function and the step-size / contraction bookkeeping around it.

use crate::error::{Error, Result};
use crate::operators::{
    check_dim, eval_phi, is_finite, lipschitz_bound, LipschitzMap, PhiParams, Point, ResolventMap,
};
use crate::problems::ProblemInstance;

/// `q = sqrt(1 - gamma (2 alpha - gamma L^2))`, the Lipschitz modulus of
/// `T_gamma` when `Phi` is `alpha`-strongly monotone and `L`-Lipschitz.
pub fn contraction_factor(alpha: f64, lipschitz: f64, gamma: f64) -> Result<f64> {
    let upper = 2.0 * alpha / (lipschitz * lipschitz);
    if !(gamma > 0.0 && gamma < upper) {
        return Err(Error::InvalidStepSize { gamma, upper });
    }
    let slack = gamma * (2.0 * alpha - gamma * lipschitz * lipschitz);
    Ok((1.0 - slack).max(0.0).sqrt())
}

/// `alpha / L^2`, the maximizer of `gamma (2 alpha - gamma L^2)`.
pub fn default_stepsize(alpha: f64, lipschitz: f64) -> f64 {
    alpha / (lipschitz * lipschitz)
}

/// Step size in the contraction window whose factor equals `q`:
/// the smaller root of `gamma^2 L^2 - 2 alpha gamma + 1 - q^2 = 0`.
pub fn stepsize_for_factor(alpha: f64, lipschitz: f64, q: f64) -> Result<f64> {
    let l2 = lipschitz * lipschitz;
    let disc = alpha * alpha - l2 * (1.0 - q * q);
    if !(0.0..1.0).contains(&q) || disc < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no step size reaches q = {q} with alpha = {alpha}, L = {lipschitz}"
        )));
    }
    Ok((1.0 - q * q) / (alpha + disc.sqrt()))
}

/// Everything needed to apply `T_gamma` for a fixed `(alpha, beta, w)`.
#[derive(Debug, Clone)]
pub struct FBContext {
    resolvent: ResolventMap,
    f: LipschitzMap,
    g: LipschitzMap,
    phi: PhiParams,
    anchor: Point,
    gamma: f64,
    lipschitz: f64,
    q: f64,
}

impl FBContext {
    /// Builds the context. `gamma = None` selects [`default_stepsize`]; an
    /// explicit step must lie in `(0, 2 alpha / L^2)`.
    pub fn new(
        resolvent: ResolventMap,
        f: LipschitzMap,
        g: LipschitzMap,
        phi: PhiParams,
        anchor: Point,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let dim = resolvent.dim();
        check_dim(dim, f.dim())?;
        check_dim(dim, g.dim())?;
        check_dim(dim, anchor.len())?;
        if !is_finite(&anchor) {
            return Err(Error::InvalidParameter("anchor must be finite".into()));
        }
        let lipschitz = lipschitz_bound(phi, f.lipschitz(), g.lipschitz());
        let gamma = gamma.unwrap_or_else(|| default_stepsize(phi.alpha(), lipschitz));
        let q = contraction_factor(phi.alpha(), lipschitz, gamma)?;
        Ok(FBContext {
            resolvent,
            f,
            g,
            phi,
            anchor,
            gamma,
            lipschitz,
            q,
        })
    }

    pub fn for_problem(
        problem: &ProblemInstance,
        phi: PhiParams,
        anchor: Point,
        gamma: Option<f64>,
    ) -> Result<Self> {
        Self::new(
            problem.resolvent().clone(),
            problem.f().clone(),
            problem.g().clone(),
            phi,
            anchor,
            gamma,
        )
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn phi(&self) -> PhiParams {
        self.phi
    }

    pub fn alpha(&self) -> f64 {
        self.phi.alpha()
    }

    pub fn beta(&self) -> f64 {
        self.phi.beta()
    }

    pub fn anchor(&self) -> &Point {
        &self.anchor
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `L_{alpha,beta}`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn resolvent(&self) -> &ResolventMap {
        &self.resolvent
    }

    pub fn eval_phi(&self, v: &Point) -> Result<Point> {
        eval_phi(self.phi, &self.f, &self.g, v, &self.anchor)
    }
}

pub fn fb_step(ctx: &FBContext, v: &Point) -> Result<Point> {
    let forward = v - ctx.eval_phi(v)? * ctx.gamma;
    ctx.resolvent.apply(ctx.gamma, &forward)
}

/// `(v - T_gamma(v)) / gamma`; vanishes exactly at the subproblem solution.
pub fn merit(ctx: &FBContext, v: &Point) -> Result<Point> {
    Ok((v - fb_step(ctx, v)?) / ctx.gamma)
}

/// `(1 + gamma L) / alpha * ||merit||`, an upper bound on the distance from
/// `v` to the subproblem solution.
pub fn distance_bound(ctx: &FBContext, merit_norm: f64) -> f64 {
    (1.0 + ctx.gamma * ctx.lipschitz) / ctx.alpha() * merit_norm
}
