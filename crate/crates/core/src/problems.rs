//! Benchmark instances of the nested problem `VI(G, zer(A + F))`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operators::{
    check_dim, point, spectral_norm, BoxSet, LipschitzMap, Point, ResolventMap,
};

/// Data `(A, F, G)` of a nested variational inequality.
#[derive(Clone)]
pub struct ProblemInstance {
    name: String,
    resolvent: ResolventMap,
    f: LipschitzMap,
    g: LipschitzMap,
    analytic_solution: Option<Point>,
    theory_unbounded: bool,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("lipschitz_f", &self.f.lipschitz())
            .field("lipschitz_g", &self.g.lipschitz())
            .field("domain", &self.domain())
            .field("analytic_solution", &self.analytic_solution)
            .field("theory_unbounded", &self.theory_unbounded)
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        resolvent: ResolventMap,
        f: LipschitzMap,
        g: LipschitzMap,
        analytic_solution: Option<Point>,
    ) -> Result<Self> {
        let dim = resolvent.dim();
        check_dim(dim, f.dim())?;
        check_dim(dim, g.dim())?;
        if let Some(sol) = &analytic_solution {
            check_dim(dim, sol.len())?;
        }
        let theory_unbounded = resolvent.domain().is_none();
        Ok(ProblemInstance {
            name: name.into(),
            resolvent,
            f,
            g,
            analytic_solution,
            theory_unbounded,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.resolvent.dim()
    }

    pub fn resolvent(&self) -> &ResolventMap {
        &self.resolvent
    }

    pub fn f(&self) -> &LipschitzMap {
        &self.f
    }

    pub fn g(&self) -> &LipschitzMap {
        &self.g
    }

    /// `dom(A)` when it is a box.
    pub fn domain(&self) -> Option<&BoxSet> {
        self.resolvent.domain()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn analytic_solution(&self) -> Option<&Point> {
        self.analytic_solution.as_ref()
    }

    /// `dom(A)` is not known to be bounded, so the outer-loop theory does not
    /// formally apply. The solver still runs.
    pub fn theory_unbounded(&self) -> bool {
        self.theory_unbounded
    }

    /// Fixed-point residual `x - J_{gamma A}(x - gamma F(x))` of the lower-level
    /// inclusion `0 in A x + F x`.
    pub fn lower_level_residual(&self, gamma: f64, x: &Point) -> Result<Point> {
        let forward = x - self.f.eval(x)? * gamma;
        Ok(x - self.resolvent.apply(gamma, &forward)?)
    }

    /// Box used when sampling the operators: `dom(A)` if bounded, else `[-10, 10]^d`.
    pub fn sampling_box(&self) -> BoxSet {
        self.domain()
            .cloned()
            .unwrap_or_else(|| BoxSet::cube(self.dim(), -10.0, 10.0).expect("valid cube"))
    }
}

pub fn analytic_solution(problem: &ProblemInstance) -> Option<Point> {
    problem.analytic_solution().cloned()
}

/// Two-player zero-sum game on `[11, 60] x [10, 50]` with
/// `F(x) = [[0, -0.1], [0.1, 0]] x + (1, 0)`, upper-level `G = grad 0.5 ||x||^2`.
///
/// The lower-level solution set is `[11, 60] x {10}`; the least-norm point of
/// it is `(11, 10)`.
pub fn make_zero_sum_game() -> ProblemInstance {
    let bx = BoxSet::from_bounds(&[(11.0, 60.0), (10.0, 50.0)]).expect("valid box");
    let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.1, 0.1, 0.0]);
    let f = LipschitzMap::affine(m, point(&[1.0, 0.0]))
        .expect("valid affine map")
        .with_lipschitz(0.1);
    ProblemInstance::new(
        "zero_sum_game",
        ResolventMap::normal_cone(bx),
        f,
        LipschitzMap::identity(2),
        Some(point(&[11.0, 10.0])),
    )
    .expect("consistent dimensions")
}

/// `min 0.5 ||v||^2` over the minimizers of `f(v) = 0.5 ||B v - c||^2` on `box`.
///
/// `F = grad f = B^T (B v - c)`, `A = N_box`, `G = Id`. The stored solution is
/// the least-norm point of `box` intersected with the unconstrained minimizers
/// `B^+ c + null(B)`, found by Dykstra's alternating projections.
pub fn make_simple_bilevel(b: DMatrix<f64>, c: Point, bx: BoxSet) -> Result<ProblemInstance> {
    let n = b.ncols();
    check_dim(b.nrows(), c.len())?;
    check_dim(n, bx.dim())?;

    let pinv = b
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Problem(format!("pseudo-inverse failed: {e}")))?;
    let x_star = &pinv * &c;
    let null_proj = DMatrix::identity(n, n) - &pinv * &b;
    let solution = least_norm_in_box(&x_star, &null_proj, &bx).ok_or_else(|| {
        Error::Problem("box contains no minimizer of the lower-level objective".into())
    })?;

    let gram = b.transpose() * &b;
    let btc = b.transpose() * &c;
    let lipschitz = spectral_norm(&gram);
    let f = LipschitzMap::new(n, lipschitz, move |v| &gram * v - &btc)?;
    ProblemInstance::new(
        "simple_bilevel",
        ResolventMap::normal_cone(bx),
        f,
        LipschitzMap::identity(n),
        Some(solution),
    )
}

/// Dykstra's algorithm projecting the origin onto `box ∩ (x_star + range(null_proj))`.
fn least_norm_in_box(x_star: &Point, null_proj: &DMatrix<f64>, bx: &BoxSet) -> Option<Point> {
    const MAX_ITER: usize = 200_000;
    let onto_affine = |x: &Point| x_star + null_proj * (x - x_star);
    let onto_box = |x: &Point| crate::operators::project_box(x, bx).expect("dims checked");

    let n = x_star.len();
    let mut x = Point::zeros(n);
    let mut p = Point::zeros(n);
    let mut q = Point::zeros(n);
    for _ in 0..MAX_ITER {
        let y = onto_affine(&(&x + &p));
        p = &x + &p - &y;
        let x_next = onto_box(&(&y + &q));
        q = &y + &q - &x_next;
        let moved = (&x_next - &x).norm();
        x = x_next;
        if moved <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    let gap = (&x - onto_affine(&x)).norm();
    (gap <= 1e-8 * (1.0 + x.norm())).then_some(x)
}

/// Primal-dual form of `min f(v) + r(L^T v)`:
/// `F(v, w) = [L w + grad f(v); -L^T v]`, `A(v, w) = {0} x ∂r*(w)`,
/// with `L` given as an `n x m` matrix (`v` in `R^n`, `w` in `R^m`).
///
/// `prox_r(s, x)` must return `prox_{s r}(x)`. The dual resolvent uses the
/// Moreau identity `J_{gamma ∂r*}(w) = w - gamma prox_{r / gamma}(w / gamma)`.
/// `dom(A)` is unbounded in the dual block, so the instance is tagged
/// [`ProblemInstance::theory_unbounded`].
pub fn make_saddle_point_bilevel<P>(
    f_grad: LipschitzMap,
    lmat: DMatrix<f64>,
    prox_r: P,
    g_grad: LipschitzMap,
) -> Result<ProblemInstance>
where
    P: Fn(f64, &Point) -> Point + Send + Sync + 'static,
{
    let (n, m) = lmat.shape();
    check_dim(n, f_grad.dim())?;
    check_dim(n, g_grad.dim())?;
    if m == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let dim = n + m;

    let lipschitz_f = spectral_norm(&lmat) + f_grad.lipschitz();
    let lmat_t = lmat.transpose();
    let f = LipschitzMap::new(dim, lipschitz_f, move |z| {
        let v = z.rows(0, n).into_owned();
        let w = z.rows(n, m).into_owned();
        let top = &lmat * &w + f_grad.eval(&v).expect("block dims checked");
        let bottom = -(&lmat_t * &v);
        stack(&top, &bottom)
    })?;

    let resolvent = ResolventMap::new(dim, None, move |gamma, z| {
        let v = z.rows(0, n).into_owned();
        let w = z.rows(n, m).into_owned();
        let dual = &w - prox_r(1.0 / gamma, &(&w / gamma)) * gamma;
        stack(&v, &dual)
    })?;

    let lipschitz_g = g_grad.lipschitz();
    let g = LipschitzMap::new(dim, lipschitz_g, move |z| {
        let v = z.rows(0, n).into_owned();
        stack(
            &g_grad.eval(&v).expect("block dims checked"),
            &Point::zeros(m),
        )
    })?;

    ProblemInstance::new("saddle_point_bilevel", resolvent, f, g, None)
}

fn stack(top: &Point, bottom: &Point) -> Point {
    Point::from_iterator(
        top.len() + bottom.len(),
        top.iter().chain(bottom.iter()).copied(),
    )
}

/// Unconstrained 2-D instance `A = 0`, `F(v) = s J (v - center)` with `J` the
/// rotation by 90 degrees, `G = Id`. `F` is skew, so the regularized
/// subproblem is an affine contraction with a closed-form fixed point.
pub fn make_affine_contraction(skew: f64, center: Point) -> Result<ProblemInstance> {
    check_dim(2, center.len())?;
    let m = DMatrix::from_row_slice(2, 2, &[0.0, -skew, skew, 0.0]);
    let offset = -(&m * &center);
    let f = LipschitzMap::affine(m, offset)?;
    ProblemInstance::new(
        "affine_contraction",
        ResolventMap::zero(2),
        f,
        LipschitzMap::identity(2),
        None,
    )
}

/// One-dimensional saddle instance: `f(v) = 0.5 v^2`, `L = [1]`,
/// `r = indicator of [-1, 1]`, `g(v) = 0.5 v^2`. The saddle point is `(0, 0)`.
pub fn make_unit_saddle() -> ProblemInstance {
    make_saddle_point_bilevel(
        LipschitzMap::identity(1),
        DMatrix::from_element(1, 1, 1.0),
        |_, x: &Point| x.map(|c| c.clamp(-1.0, 1.0)),
        LipschitzMap::identity(1),
    )
    .expect("consistent dimensions")
    .renamed("unit_saddle")
}

/// Names accepted by [`by_name`].
pub const PROBLEM_NAMES: &[&str] = &[
    "zero_sum_game",
    "simple_bilevel",
    "unit_saddle",
    "affine_contraction",
];

/// Default-parameter instances by name.
///
/// `simple_bilevel` uses `B = [[1, 0], [0, 0]]`, `c = (1, 0)`, box `[-2, 2]^2`;
/// `affine_contraction` uses skew `0.1` and center `(1, -1)`.
pub fn by_name(name: &str) -> Result<ProblemInstance> {
    match name {
        "zero_sum_game" | "game" => Ok(make_zero_sum_game()),
        "simple_bilevel" | "bilevel" => make_simple_bilevel(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            point(&[1.0, 0.0]),
            BoxSet::cube(2, -2.0, 2.0)?,
        ),
        "unit_saddle" | "saddle" => Ok(make_unit_saddle()),
        "affine_contraction" | "affine" => make_affine_contraction(0.1, point(&[1.0, -1.0])),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{check_firmly_nonexpansive, check_monotone};

    #[test]
    fn game_data() {
        let p = make_zero_sum_game();
        let fx = p.f().eval(&point(&[11.0, 10.0])).unwrap();
        assert!((fx - point(&[0.0, 1.1])).norm() < 1e-15);
        assert_eq!(analytic_solution(&p), Some(point(&[11.0, 10.0])));
        assert_eq!(p.f().lipschitz(), 0.1);
        assert_eq!(p.g().lipschitz(), 1.0);
        assert!(!p.theory_unbounded());
    }

    #[test]
    fn game_lower_level_solution_set() {
        let p = make_zero_sum_game();
        for i in 0..=490 {
            let x1 = 11.0 + 0.1 * i as f64;
            let r = p.lower_level_residual(0.5, &point(&[x1, 10.0])).unwrap();
            assert!(r.norm() <= 1e-10, "x1 = {x1}: {r}");
        }
        // Off the bottom edge the residual is positive.
        let r = p.lower_level_residual(0.5, &point(&[30.0, 20.0])).unwrap();
        assert!(r.norm() > 1e-3);
    }

    #[test]
    fn game_is_skew() {
        let p = make_zero_sum_game();
        let rep = check_monotone(p.f(), &p.sampling_box(), 5000, 42).unwrap();
        assert!(rep.min_monotone_ratio.abs() < 1e-12, "{rep:?}");
        assert!(rep.max_lipschitz_ratio <= 0.1 * (1.0 + 1e-12));
    }

    #[test]
    fn simple_bilevel_examples() {
        let bx = BoxSet::cube(2, -2.0, 2.0).unwrap();
        let p = make_simple_bilevel(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            point(&[1.0, 0.0]),
            bx.clone(),
        )
        .unwrap();
        assert!((p.analytic_solution().unwrap() - point(&[1.0, 0.0])).norm() < 1e-12);
        assert!((p.f().lipschitz() - 1.0).abs() < 1e-12);
        // Every (1, y) solves the lower level.
        for y in [-2.0, -0.5, 0.0, 1.3, 2.0] {
            assert!(
                p.lower_level_residual(0.5, &point(&[1.0, y]))
                    .unwrap()
                    .norm()
                    < 1e-14
            );
        }

        let p =
            make_simple_bilevel(DMatrix::identity(2, 2), point(&[0.5, 0.5]), bx.clone()).unwrap();
        assert!((analytic_solution(&p).unwrap() - point(&[0.5, 0.5])).norm() < 1e-12);

        let p = make_simple_bilevel(
            DMatrix::zeros(2, 2),
            point(&[0.0, 0.0]),
            BoxSet::cube(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(analytic_solution(&p).unwrap().norm() < 1e-12);
        assert_eq!(p.f().lipschitz(), 0.0);
    }

    #[test]
    fn simple_bilevel_least_norm_with_box_active() {
        // Minimizers {x1 + x2 = 4} meet [0, 3]^2 in a segment; the least-norm
        // point of the segment is (2, 2), which is also B^+ c.
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = make_simple_bilevel(b.clone(), point(&[4.0]), BoxSet::cube(2, 0.0, 3.0).unwrap())
            .unwrap();
        assert!((p.analytic_solution().unwrap() - point(&[2.0, 2.0])).norm() < 1e-9);

        // Box [2.5, 3] x [0, 3]: B^+ c = (2, 2) is infeasible, answer is (2.5, 1.5).
        let bx = BoxSet::from_bounds(&[(2.5, 3.0), (0.0, 3.0)]).unwrap();
        let p = make_simple_bilevel(b, point(&[4.0]), bx).unwrap();
        assert!((p.analytic_solution().unwrap() - point(&[2.5, 1.5])).norm() < 1e-8);
    }

    #[test]
    fn simple_bilevel_rejects_box_without_minimizer() {
        let err = make_simple_bilevel(
            DMatrix::identity(2, 2),
            point(&[5.0, 5.0]),
            BoxSet::cube(2, -1.0, 1.0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Problem(_)));
        assert!(make_simple_bilevel(
            DMatrix::identity(2, 2),
            point(&[5.0]),
            BoxSet::cube(2, -1.0, 1.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn saddle_with_zero_regularizer_collapses() {
        // r = 0: prox is the identity, so the dual resolvent sends w to 0.
        let p = make_saddle_point_bilevel(
            LipschitzMap::identity(1),
            DMatrix::from_element(1, 1, 2.0),
            |_, x: &Point| x.clone(),
            LipschitzMap::identity(1),
        )
        .unwrap();
        let out = p.resolvent().apply(0.7, &point(&[3.0, -4.0])).unwrap();
        assert!((out - point(&[3.0, 0.0])).norm() < 1e-14);
        let fz = p.f().eval(&point(&[1.5, 0.0])).unwrap();
        assert!((fz[0] - 1.5).abs() < 1e-15);
        assert!(p.theory_unbounded());
        assert!(analytic_solution(&p).is_none());
    }

    #[test]
    fn saddle_operator_is_skew_without_f() {
        let lmat = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 0.0, 1.0]);
        let p = make_saddle_point_bilevel(
            LipschitzMap::zero(2),
            lmat,
            |_, x: &Point| x.clone(),
            LipschitzMap::identity(2),
        )
        .unwrap();
        let rep = check_monotone(p.f(), &p.sampling_box(), 2000, 1).unwrap();
        assert!(rep.min_monotone_ratio.abs() < 1e-12, "{rep:?}");
        assert!(rep.passed());
    }

    #[test]
    fn saddle_dimension_checks() {
        let res = make_saddle_point_bilevel(
            LipschitzMap::identity(3),
            DMatrix::zeros(2, 2),
            |_, x: &Point| x.clone(),
            LipschitzMap::identity(2),
        );
        assert!(matches!(res, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unit_saddle_resolvent_and_solution() {
        let p = make_unit_saddle();
        let wide = BoxSet::cube(2, -3.0, 3.0).unwrap();
        for gamma in [0.1, 1.0, 4.0] {
            let rep = check_firmly_nonexpansive(p.resolvent(), gamma, &wide, 2000, 9).unwrap();
            assert!(!rep.violation, "gamma={gamma}: {rep:?}");
        }
        // Grid oracle on [-3, 3]^2: the residual minimizer is the origin.
        let mut best = (f64::INFINITY, point(&[0.0, 0.0]));
        for i in 0..=600 {
            for j in 0..=600 {
                let z = point(&[-3.0 + 0.01 * i as f64, -3.0 + 0.01 * j as f64]);
                let r = p.lower_level_residual(0.5, &z).unwrap().norm();
                if r < best.0 {
                    best = (r, z);
                }
            }
        }
        assert!(best.1.norm() < 1e-9, "{:?}", best);
        assert!(p.lower_level_residual(0.5, &best.1).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn registry() {
        for name in PROBLEM_NAMES {
            let p = by_name(name).unwrap();
            assert_eq!(p.name(), *name);
            let bx = p.sampling_box();
            assert!(
                check_monotone(p.f(), &bx, 500, 3).unwrap().passed(),
                "{name}"
            );
            assert!(
                check_monotone(p.g(), &bx, 500, 3).unwrap().passed(),
                "{name}"
            );
        }
        assert!(matches!(by_name("nope"), Err(Error::UnknownProblem(_))));
    }
}
