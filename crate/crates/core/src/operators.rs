//! Operator building blocks: points, boxes, projections, single-valued
//! Lipschitz maps, resolvent-represented maximally monotone operators and the
//! regularized operator `Phi(v, w) = F(v) + beta G(v) + alpha (v - w)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative slack used by the sampled monotonicity / Lipschitz checks.
pub const SAMPLING_TOL: f64 = 1e-9;

/// A point of the (finite-dimensional) ambient Hilbert space.
pub type Point = DVector<f64>;

pub fn point(coords: &[f64]) -> Point {
    DVector::from_column_slice(coords)
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn is_finite(x: &Point) -> bool {
    x.iter().all(|c| c.is_finite())
}

/// Axis-aligned box `[lower, upper]`, bounded in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Point,
    upper: Point,
}

impl BoxSet {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter(
                "box must have dimension >= 1".into(),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "box bound {i} is not finite"
                )));
            }
            if lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "box bound {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let lower = Point::from_iterator(bounds.len(), bounds.iter().map(|b| b.0));
        let upper = Point::from_iterator(bounds.len(), bounds.iter().map(|b| b.1));
        Self::new(lower, upper)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Point::from_element(dim, lo), Point::from_element(dim, hi))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Point {
        &self.lower
    }

    pub fn upper(&self) -> &Point {
        &self.upper
    }

    pub fn center(&self) -> Point {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(c, (lo, hi))| *lo <= *c && *c <= *hi)
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::from_iterator(
            self.dim(),
            self.lower.iter().zip(self.upper.iter()).map(|(lo, hi)| {
                if lo < hi {
                    rng.gen_range(*lo..=*hi)
                } else {
                    *lo
                }
            }),
        )
    }
}

/// Orthogonal projection onto a box (componentwise clamp).
pub fn project_box(x: &Point, bx: &BoxSet) -> Result<Point> {
    check_dim(bx.dim(), x.len())?;
    Ok(clamp_into(x, bx))
}

fn clamp_into(x: &Point, bx: &BoxSet) -> Point {
    Point::from_iterator(
        x.len(),
        x.iter()
            .zip(bx.lower.iter().zip(bx.upper.iter()))
            .map(|(c, (lo, hi))| c.clamp(*lo, *hi)),
    )
}

/// Resolvent of the normal cone of `bx`. It is the projection for every `gamma`.
pub fn resolvent_normal_cone(bx: &BoxSet, gamma: f64, x: &Point) -> Result<Point> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    project_box(x, bx)
}

type MapFn = dyn Fn(&Point) -> Point + Send + Sync;
type ResolventFn = dyn Fn(f64, &Point) -> Point + Send + Sync;

/// A single-valued monotone map together with a declared Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzMap {
    dim: usize,
    lipschitz: f64,
    eval: Arc<MapFn>,
}

impl fmt::Debug for LipschitzMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzMap")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl LipschitzMap {
    pub fn new<F>(dim: usize, lipschitz: f64, eval: F) -> Result<Self>
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant must be finite and >= 0, got {lipschitz}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("map dimension must be >= 1".into()));
        }
        Ok(LipschitzMap {
            dim,
            lipschitz,
            eval: Arc::new(eval),
        })
    }

    /// `x -> matrix * x + offset`, declared with the spectral norm of `matrix`.
    pub fn affine(matrix: DMatrix<f64>, offset: Point) -> Result<Self> {
        check_dim(matrix.nrows(), matrix.ncols())?;
        check_dim(matrix.nrows(), offset.len())?;
        let lipschitz = spectral_norm(&matrix);
        Self::new(matrix.nrows(), lipschitz, move |x| &matrix * x + &offset)
    }

    /// Gradient of `0.5 * ||x||^2`.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, 1.0, |x| x.clone()).expect("identity map is valid")
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, 0.0, move |x| Point::zeros(x.len())).expect("zero map is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Same map, different declared constant. Used to exercise the validators.
    pub fn with_lipschitz(&self, lipschitz: f64) -> Self {
        LipschitzMap {
            lipschitz,
            ..self.clone()
        }
    }

    pub fn eval(&self, x: &Point) -> Result<Point> {
        check_dim(self.dim, x.len())?;
        Ok((self.eval)(x))
    }
}

/// A maximally monotone operator `A`, represented by its resolvent
/// `J_{gamma A} = (Id + gamma A)^{-1}`.
#[derive(Clone)]
pub struct ResolventMap {
    dim: usize,
    domain: Option<BoxSet>,
    resolvent: Arc<ResolventFn>,
}

impl fmt::Debug for ResolventMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolventMap")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ResolventMap {
    /// `domain = None` marks `dom(A)` as unbounded.
    pub fn new<F>(dim: usize, domain: Option<BoxSet>, resolvent: F) -> Result<Self>
    where
        F: Fn(f64, &Point) -> Point + Send + Sync + 'static,
    {
        if let Some(bx) = &domain {
            check_dim(dim, bx.dim())?;
        }
        Ok(ResolventMap {
            dim,
            domain,
            resolvent: Arc::new(resolvent),
        })
    }

    /// `A = N_box`; the resolvent is the projection onto the box.
    pub fn normal_cone(bx: BoxSet) -> Self {
        let inner = bx.clone();
        ResolventMap {
            dim: bx.dim(),
            domain: Some(bx),
            resolvent: Arc::new(move |_, x| clamp_into(x, &inner)),
        }
    }

    /// `A = 0`; the resolvent is the identity.
    pub fn zero(dim: usize) -> Self {
        ResolventMap {
            dim,
            domain: None,
            resolvent: Arc::new(|_, x| x.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Option<&BoxSet> {
        self.domain.as_ref()
    }

    pub fn apply(&self, gamma: f64, x: &Point) -> Result<Point> {
        check_dim(self.dim, x.len())?;
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be > 0, got {gamma}"
            )));
        }
        Ok((self.resolvent)(gamma, x))
    }
}

/// Proximal weight `alpha > 0` and Tikhonov weight `beta >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiParams {
    alpha: f64,
    beta: f64,
}

impl PhiParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        Ok(PhiParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `Phi_{alpha,beta}(v, w) = F(v) + beta G(v) + alpha (v - w)`.
pub fn eval_phi(
    params: PhiParams,
    f: &LipschitzMap,
    g: &LipschitzMap,
    v: &Point,
    w: &Point,
) -> Result<Point> {
    check_dim(v.len(), w.len())?;
    let fv = f.eval(v)?;
    let gv = g.eval(v)?;
    Ok(fv + gv * params.beta + (v - w) * params.alpha)
}

/// Lipschitz constant `L_F + beta L_G + alpha` of `Phi_{alpha,beta}(., w)`.
pub fn lipschitz_bound(params: PhiParams, lipschitz_f: f64, lipschitz_g: f64) -> f64 {
    lipschitz_f + params.beta * lipschitz_g + params.alpha
}

/// Spectral norm by power iteration on `M^T M`.
///
/// Stops once the Rayleigh quotient changes by less than `1e-12` (relative) or
/// after 10000 iterations.
pub fn spectral_norm(matrix: &DMatrix<f64>) -> f64 {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 10_000;

    let n = matrix.ncols();
    if n == 0 || matrix.nrows() == 0 {
        return 0.0;
    }
    let gram = matrix.transpose() * matrix;
    // Fixed, non-symmetric start so that it is not orthogonal to the top
    // eigenvector of structured matrices.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    x /= x.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..MAX_ITER {
        let y = &gram * &x;
        let rayleigh = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x = y / norm;
        let done = (rayleigh - estimate).abs() <= TOL * rayleigh.abs().max(f64::MIN_POSITIVE);
        estimate = rayleigh;
        if done {
            break;
        }
    }
    // For a unit x, x^T M^T M x <= ||M^T M x|| <= lambda_max; keep the tighter one.
    let upper = (&gram * &x).norm();
    estimate.max(upper).max(0.0).sqrt()
}

/// Sampled monotonicity and Lipschitz ratios of a map over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub samples: usize,
    /// Minimum of `<F(x) - F(y), x - y> / ||x - y||^2`.
    pub min_monotone_ratio: f64,
    /// Maximum of `||F(x) - F(y)|| / ||x - y||`.
    pub max_lipschitz_ratio: f64,
    pub declared_lipschitz: f64,
    pub monotone_violation: bool,
    pub lipschitz_violation: bool,
}

impl MonotoneReport {
    pub fn passed(&self) -> bool {
        !self.monotone_violation && !self.lipschitz_violation
    }
}

pub fn check_monotone(
    map: &LipschitzMap,
    bx: &BoxSet,
    n_samples: usize,
    seed: u64,
) -> Result<MonotoneReport> {
    check_dim(map.dim(), bx.dim())?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0_f64;
    let mut used = 0;
    for _ in 0..n_samples {
        let x = bx.sample(&mut rng);
        let y = bx.sample(&mut rng);
        let dx = &x - &y;
        let dist2 = dx.norm_squared();
        if dist2 == 0.0 {
            continue;
        }
        let df = map.eval(&x)? - map.eval(&y)?;
        min_ratio = min_ratio.min(df.dot(&dx) / dist2);
        max_ratio = max_ratio.max(df.norm() / dist2.sqrt());
        used += 1;
    }
    if used == 0 {
        min_ratio = 0.0;
    }
    let declared = map.lipschitz();
    Ok(MonotoneReport {
        samples: used,
        min_monotone_ratio: min_ratio,
        max_lipschitz_ratio: max_ratio,
        declared_lipschitz: declared,
        monotone_violation: min_ratio < -SAMPLING_TOL,
        lipschitz_violation: max_ratio > declared * (1.0 + SAMPLING_TOL),
    })
}

/// Sampled firm-nonexpansiveness check of a resolvent:
/// `||J x - J y||^2 <= <J x - J y, x - y> + 1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmReport {
    pub samples: usize,
    /// Largest observed `||J x - J y||^2 - <J x - J y, x - y>`.
    pub max_excess: f64,
    pub violation: bool,
}

pub fn check_firmly_nonexpansive(
    resolvent: &ResolventMap,
    gamma: f64,
    bx: &BoxSet,
    n_samples: usize,
    seed: u64,
) -> Result<FirmReport> {
    check_dim(resolvent.dim(), bx.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let x = bx.sample(&mut rng);
        let y = bx.sample(&mut rng);
        let dj = resolvent.apply(gamma, &x)? - resolvent.apply(gamma, &y)?;
        max_excess = max_excess.max(dj.norm_squared() - dj.dot(&(&x - &y)));
    }
    Ok(FirmReport {
        samples: n_samples,
        max_excess,
        violation: max_excess > SAMPLING_TOL,
    })
}
