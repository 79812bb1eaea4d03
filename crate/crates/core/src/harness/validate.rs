//! Numerical checks of the standing assumptions for a problem and schedule.

use std::fmt;

use crate::error::Result;
use crate::fb_engine::default_stepsize;
use crate::inner_loop::{energy_rate, inertia_residual, select_tau, INERTIA_TOL};
use crate::operators::{
    check_firmly_nonexpansive, check_monotone, lipschitz_bound, FirmReport, MonotoneReport,
    PhiParams,
};
use crate::outer_loop::{beta_schedule, validate_slow_control, OuterConfig, SlowControlReport};
use crate::problems::ProblemInstance;

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub problem: String,
    pub theory_unbounded: bool,
    pub f: MonotoneReport,
    pub g: MonotoneReport,
    pub resolvent: Vec<(f64, FirmReport)>,
    pub slow_control: SlowControlReport,
    /// Outer iterations whose `tau_t` violates the parameter inequality.
    pub inertia_violations: usize,
    /// Outer iterations with `Q_t >= 1`.
    pub noncontractive_energy: usize,
    pub outer_iters: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.f.passed()
            && self.g.passed()
            && self.resolvent.iter().all(|(_, r)| !r.violation)
            && self.slow_control.passed()
            && self.inertia_violations == 0
    }
}

pub fn validate_problem(
    problem: &ProblemInstance,
    cfg: &OuterConfig,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let bx = problem.sampling_box();
    let f = check_monotone(problem.f(), &bx, n_samples, seed)?;
    let g = check_monotone(problem.g(), &bx, n_samples, seed.wrapping_add(1))?;
    let resolvent = [0.01, 0.1, 1.0, 10.0]
        .into_iter()
        .map(|gamma| {
            check_firmly_nonexpansive(problem.resolvent(), gamma, &bx, n_samples, seed)
                .map(|r| (gamma, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let slow_control = validate_slow_control(
        cfg,
        problem.f().lipschitz(),
        problem.g().lipschitz(),
        cfg.outer_iters.max(1000),
    )?;

    let (mut inertia_violations, mut noncontractive_energy) = (0, 0);
    for t in 1..cfg.outer_iters {
        let phi = PhiParams::new(cfg.alpha, beta_schedule(t, cfg.eta))?;
        let lip = lipschitz_bound(phi, problem.f().lipschitz(), problem.g().lipschitz());
        let gamma = default_stepsize(cfg.alpha, lip);
        let q = crate::fb_engine::contraction_factor(cfg.alpha, lip, gamma)?;
        let tau = select_tau(cfg.theta, q);
        inertia_violations += usize::from(inertia_residual(cfg.theta, tau, q) > INERTIA_TOL);
        noncontractive_energy += usize::from(energy_rate(cfg.theta, q) >= 1.0);
    }
    Ok(ValidationReport {
        problem: problem.name().to_string(),
        theory_unbounded: problem.theory_unbounded(),
        f,
        g,
        resolvent,
        slow_control,
        inertia_violations,
        noncontractive_energy,
        outer_iters: cfg.outer_iters,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(out, "problem: {}", self.problem)?;
        if self.theory_unbounded {
            writeln!(
                out,
                "  note: dom(A) unbounded, outer-loop guarantees do not apply"
            )?;
        }
        for (name, r) in [("F", &self.f), ("G", &self.g)] {
            writeln!(
                out,
                "  {name}: monotone ratio min {:.3e}, Lipschitz ratio max {:.6e} (declared {:.6e}) [{}]",
                r.min_monotone_ratio,
                r.max_lipschitz_ratio,
                r.declared_lipschitz,
                verdict(r.passed())
            )?;
        }
        for (gamma, r) in &self.resolvent {
            writeln!(
                out,
                "  J_(gamma A), gamma={gamma}: firm nonexpansiveness excess {:.3e} [{}]",
                r.max_excess,
                verdict(!r.violation)
            )?;
        }
        let s = &self.slow_control;
        writeln!(
            out,
            "  beta_t: partial sum {:.6e} over {} terms, tail-half sum {:.6e}, summable: {} [{}]",
            s.beta_partial_sum,
            s.horizon,
            s.beta_tail_sum,
            s.beta_summable,
            verdict(!s.beta_summable)
        )?;
        writeln!(
            out,
            "  e_t/beta_t over tail half: max {:.6e}, first {:.6e}, last {:.6e} [{}]",
            s.tail_ratio_max,
            s.tail_ratio_first,
            s.tail_ratio_last,
            verdict(!s.ratio_not_decreasing)
        )?;
        writeln!(
            out,
            "  inertia: {} of {} outer steps violate the parameter inequality [{}]",
            self.inertia_violations,
            self.outer_iters.saturating_sub(1),
            verdict(self.inertia_violations == 0)
        )?;
        writeln!(
            out,
            "  energy rate Q_t >= 1 at {} of {} outer steps",
            self.noncontractive_energy,
            self.outer_iters.saturating_sub(1)
        )?;
        write!(out, "overall: {}", verdict(self.passed()))
    }
}
