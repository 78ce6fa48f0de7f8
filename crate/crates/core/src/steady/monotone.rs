//! Sub/supersolution iteration.

use super::bracket::MonotoneBracket;
use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::linalg::{BandedLdl, SymBanded};
use crate::operators::{combine, diagonal, signed_pow, Discretization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneRun {
    pub solution: FieldPair,
    pub side: Side,
    pub iterations: usize,
    /// Dual-norm residual of the returned iterate.
    pub residual: f64,
    /// The order-preserving shift used.
    pub shift: f64,
}

/// `max (p a sup^(p-1) - λ m)^+ + 1` over free nodes.
pub fn monotone_shift(disc: &Discretization, lambda: f64, sup: &[f64]) -> f64 {
    let p = disc.spec.p;
    disc.dofs
        .free()
        .iter()
        .map(|&g| (p * disc.a_nodal[g] * sup[g].max(0.0).powf(p - 1.0) - lambda * disc.m_nodal[g]).max(0.0))
        .fold(0.0, f64::max)
        + 1.0
}

struct Stepper<'a> {
    disc: &'a Discretization,
    lambda: f64,
    shift: f64,
    ldl: BandedLdl,
}

impl<'a> Stepper<'a> {
    fn new(disc: &'a Discretization, lambda: f64, shift: f64) -> Result<Self> {
        let w = diagonal(&disc.weights);
        let op = combine(&[(1.0, &disc.laplace), (shift, &w)]);
        let ldl = SymBanded::from_csr(&op, &disc.dofs).factor()?;
        Ok(Stepper { disc, lambda, shift, ldl })
    }

    fn step(&self, u: &[f64]) -> Vec<f64> {
        let d = self.disc;
        let p = d.spec.p;
        let mu = d.m_mass.apply(u);
        let rhs: Vec<f64> = d
            .dofs
            .free()
            .iter()
            .map(|&g| self.lambda * mu[g] - d.weights[g] * (d.a_nodal[g] * signed_pow(u[g], p) - self.shift * u[g]))
            .collect();
        d.dofs.extend(&self.ldl.solve(&rhs))
    }
}

/// Scale for roundoff allowances in bracket checks.
fn slack(sup: &[f64]) -> f64 {
    1e-10 * sup.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// First node where `next` leaves `[lo, hi]` or moves against `side`.
fn violation(next: &[f64], prev: &[f64], lo: &[f64], hi: &[f64], side: Side, tol: f64) -> Option<(usize, f64)> {
    let mut worst: Option<(usize, f64)> = None;
    for g in 0..next.len() {
        let against = match side {
            Side::Below => prev[g] - next[g],
            Side::Above => next[g] - prev[g],
        };
        let excess = (lo[g] - next[g]).max(next[g] - hi[g]).max(against);
        if excess > tol && worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((g, excess));
        }
    }
    worst
}

/// Iterates from one side of the bracket; stops once the dual residual
/// drops below `tol · max(1, ‖sup‖∞)`.
pub fn monotone_solve_from(
    disc: &Discretization,
    lambda: f64,
    bracket: &MonotoneBracket,
    side: Side,
    tol: f64,
    max_iters: usize,
) -> Result<MonotoneRun> {
    bracket.sub.check_shape(&disc.mesh)?;
    bracket.sup.check_shape(&disc.mesh)?;
    let lo = bracket.sub.to_global();
    let hi = bracket.sup.to_global();
    let shift = monotone_shift(disc, lambda, &hi);
    let stepper = Stepper::new(disc, lambda, shift)?;
    let allow = slack(&hi);
    let target = tol * bracket.sup.sup_norm().max(1.0);
    let mut u = match side {
        Side::Below => lo.clone(),
        Side::Above => hi.clone(),
    };
    let mut residual = disc.dual_norm(&disc.dofs.restrict(&disc.residual_vector(lambda, &u)));
    for it in 0..max_iters {
        if residual <= target {
            return Ok(MonotoneRun {
                solution: disc.field(&u),
                side,
                iterations: it,
                residual,
                shift,
            });
        }
        let next = stepper.step(&u);
        if let Some((index, excess)) = violation(&next, &u, &lo, &hi, side, allow) {
            return Err(Error::NotContracting {
                iteration: it + 1,
                index,
                excess,
            });
        }
        u = next;
        residual = disc.dual_norm(&disc.dofs.restrict(&disc.residual_vector(lambda, &u)));
    }
    if residual <= target {
        return Ok(MonotoneRun {
            solution: disc.field(&u),
            side,
            iterations: max_iters,
            residual,
            shift,
        });
    }
    Err(Error::MaxIters {
        iterations: max_iters,
        residual,
    })
}

/// The limit from the subsolution side.
pub fn monotone_solve(disc: &Discretization, lambda: f64, bracket: &MonotoneBracket, tol: f64, max_iters: usize) -> Result<FieldPair> {
    monotone_solve_from(disc, lambda, bracket, Side::Below, tol, max_iters).map(|r| r.solution)
}

/// Steps between shift updates in [`descend`].
const DESCENT_ROUND: usize = 50;

/// Runs `iters` steps from above and returns the last iterate, converged or not.
/// Every iterate is again a supersolution, so the shift is re-derived from it
/// each round; the contraction improves as the iterate falls.
pub(crate) fn descend(disc: &Discretization, lambda: f64, sup: &FieldPair, iters: usize) -> Result<FieldPair> {
    let mut u = sup.to_global();
    let mut done = 0;
    while done < iters {
        let stepper = Stepper::new(disc, lambda, monotone_shift(disc, lambda, &u))?;
        for _ in 0..DESCENT_ROUND.min(iters - done) {
            u = stepper.step(&u);
        }
        done += DESCENT_ROUND;
    }
    Ok(disc.field(&u))
}

/// Replaces the supersolution by its image under `steps` descent steps, a
/// smaller supersolution that still dominates the subsolution.
pub fn tighten_bracket(disc: &Discretization, lambda: f64, bracket: &MonotoneBracket, steps: usize) -> Result<MonotoneBracket> {
    let sup = descend(disc, lambda, &bracket.sup, steps)?;
    let lo = bracket.sub.to_global();
    let hi = sup.to_global();
    let allow = slack(&bracket.sup.to_global());
    if let Some((index, _)) = (0..hi.len()).map(|g| (g, lo[g] - hi[g])).filter(|(_, e)| *e > allow).max_by(|a, b| a.1.total_cmp(&b.1)) {
        return Err(Error::NotContracting {
            iteration: steps,
            index,
            excess: lo[index] - hi[index],
        });
    }
    Ok(MonotoneBracket { sup, ..bracket.clone() })
}
