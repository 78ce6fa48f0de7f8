//! Tracing the positive branch over a grid of `λ`.

use super::bracket::{build_bracket, build_upper_bracket};
use super::monotone::{descend, monotone_solve_from, Side};
use super::newton::newton_solve;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::FieldPair;
use crate::operators::Discretization;
use crate::spectral::{sigma_eigenpair, DEFAULT_TOL};

/// Grid points this close to `λ*` (relative) are not attempted.
pub const SKIP_BAND: f64 = 1e-6;
/// Monotone steps from the supersolution used to seed Newton when no warm start exists.
pub const SEED_STEPS: usize = 200;
/// Monotone steps between shift updates when descending to the zero state.
const TRIVIAL_ROUND: usize = 100;
const TRIVIAL_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub lambda: f64,
    pub solution: FieldPair,
    pub sup_norm: f64,
    pub mass_norm: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Solved(BranchPoint),
    /// At or below `λ*` the zero state is the only non-negative solution.
    Trivial(BranchPoint),
    Skipped { lambda: f64 },
    Failed { lambda: f64, error: Error },
}

impl PointStatus {
    pub fn lambda(&self) -> f64 {
        match self {
            PointStatus::Solved(b) | PointStatus::Trivial(b) => b.lambda,
            PointStatus::Skipped { lambda } | PointStatus::Failed { lambda, .. } => *lambda,
        }
    }

    pub fn point(&self) -> Option<&BranchPoint> {
        match self {
            PointStatus::Solved(b) => Some(b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationDiagram {
    pub entries: Vec<PointStatus>,
    pub lambda_star: f64,
    pub lambda_infinity: f64,
}

impl BifurcationDiagram {
    /// Solved points in grid order.
    pub fn points(&self) -> Vec<&BranchPoint> {
        self.entries.iter().filter_map(PointStatus::point).collect()
    }

    /// Whether `sup_norm` strictly increases over the solved points.
    pub fn is_monotone(&self) -> bool {
        self.points().windows(2).all(|w| w[1].sup_norm > w[0].sup_norm)
    }
}

pub fn mass_norm(disc: &Discretization, u: &FieldPair) -> f64 {
    disc.unit_mass.norm_sq(&u.to_global()).max(0.0).sqrt()
}

pub fn branch_point(disc: &Discretization, lambda: f64, solution: FieldPair, newton_iters: usize, residual: f64) -> BranchPoint {
    BranchPoint {
        lambda,
        sup_norm: solution.sup_norm(),
        mass_norm: mass_norm(disc, &solution),
        solution,
        newton_iters,
        residual,
    }
}

/// Whether `u` lies above the subsolution, which every positive solution does.
fn above(sub: &FieldPair, u: &FieldPair) -> bool {
    let slack = 1e-10 * u.sup_norm().max(1.0);
    sub.to_global().iter().zip(u.to_global()).all(|(s, v)| v >= s - slack)
}

/// Positive solution at `λ` without a warm start: a few monotone steps from
/// the supersolution, then Newton. If Newton lands below the subsolution it
/// has left the positive branch, and the monotone iteration is run to the end.
pub fn cold_solve(disc: &Discretization, lambda: f64, tol: f64) -> Result<BranchPoint> {
    let bracket = build_bracket(disc, lambda)?;
    let seed = descend(disc, lambda, &bracket.sup, SEED_STEPS)?;
    if let Ok(run) = newton_solve(disc, lambda, &seed, tol) {
        if above(&bracket.sub, &run.solution) {
            return Ok(branch_point(disc, lambda, run.solution, run.iterations, run.residual));
        }
    }
    let limit = monotone_solve_from(disc, lambda, &bracket, Side::Above, tol, 1_000_000)?;
    let run = newton_solve(disc, lambda, &limit.solution, tol)?;
    Ok(branch_point(disc, lambda, run.solution, run.iterations, run.residual))
}

/// Newton from the previous grid point, accepted only if it keeps the branch
/// increasing; otherwise a cold solve.
fn solve_point(disc: &Discretization, lambda: f64, warm: Option<&FieldPair>, tol: f64) -> Result<BranchPoint> {
    if let Some(w) = warm {
        if let Ok(run) = newton_solve(disc, lambda, w, tol) {
            if run.solution.sup_norm() >= w.sup_norm() {
                return Ok(branch_point(disc, lambda, run.solution, run.iterations, run.residual));
            }
        }
    }
    cold_solve(disc, lambda, tol)
}

/// Descent from the supersolution to the zero state, re-deriving the shift
/// from the current iterate every round so the contraction improves as it falls.
fn trivial_point(disc: &Discretization, lambda: f64, tol: f64) -> Result<BranchPoint> {
    let mut u = build_upper_bracket(disc, lambda)?.sup;
    let mut residual = disc.residual(lambda, &u);
    let mut steps = 0;
    while residual > tol * u.sup_norm().max(1.0) {
        if steps >= TRIVIAL_MAX_STEPS {
            return Err(Error::MaxIters { iterations: steps, residual });
        }
        u = descend(disc, lambda, &u, TRIVIAL_ROUND)?;
        steps += TRIVIAL_ROUND;
        residual = disc.residual(lambda, &u);
    }
    Ok(branch_point(disc, lambda, u, 0, residual))
}

/// Independent cold solves, one per `λ`, in input order.
pub fn cold_sweep(disc: &Discretization, lambdas: &[f64], tol: f64, exec: Execution) -> Vec<Result<BranchPoint>> {
    exec.map(lambdas, |&l| cold_solve(disc, l, tol))
}

/// Warm-started continuation along an ascending grid.
pub fn continuation(disc: &Discretization, grid: &[f64], tol: f64) -> Result<BifurcationDiagram> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidSpec("lambda grid must be strictly ascending".into()));
    }
    let lambda_star = disc.lambda_star()?;
    let lambda_infinity = disc.existence_ceiling()?;
    let mut entries = Vec::with_capacity(grid.len());
    let mut warm: Option<FieldPair> = None;
    for &lambda in grid {
        let status = if (lambda - lambda_star).abs() < SKIP_BAND * lambda_star.abs() {
            PointStatus::Skipped { lambda }
        } else if lambda < lambda_star {
            match trivial_point(disc, lambda, tol) {
                Ok(b) => PointStatus::Trivial(b),
                Err(error) => PointStatus::Failed { lambda, error },
            }
        } else if lambda >= lambda_infinity {
            PointStatus::Failed {
                lambda,
                error: Error::WindowViolation {
                    lambda,
                    lower: lambda_star,
                    upper: lambda_infinity,
                },
            }
        } else {
            match solve_point(disc, lambda, warm.as_ref(), tol) {
                Ok(b) => {
                    warm = Some(b.solution.clone());
                    PointStatus::Solved(b)
                }
                Err(error) => PointStatus::Failed { lambda, error },
            }
        };
        entries.push(status);
    }
    Ok(BifurcationDiagram {
        entries,
        lambda_star,
        lambda_infinity,
    })
}

/// Principal eigenvalues of the linearizations at a solution: with potential
/// `a u^(p-1)` (zero at a solution) and with `p a u^(p-1)` (positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub sigma_frozen: f64,
    pub sigma_linearized: f64,
}

pub fn certificate(disc: &Discretization, lambda: f64, u: &FieldPair) -> Result<Certificate> {
    let p = disc.spec.p;
    let g = u.to_global();
    let frozen: Vec<f64> = g.iter().zip(&disc.a_nodal).map(|(v, a)| a * v.abs().powf(p - 1.0)).collect();
    let lin: Vec<f64> = frozen.iter().map(|q| p * q).collect();
    Ok(Certificate {
        sigma_frozen: sigma_eigenpair(disc, lambda, Some(&frozen), DEFAULT_TOL)?.eigenvalue,
        sigma_linearized: sigma_eigenpair(disc, lambda, Some(&lin), DEFAULT_TOL)?.eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{AxisBox, Geometry, RefugeRegion, Subdomain};
    use crate::problem::ProblemSpec;

    fn spec() -> ProblemSpec {
        let g = Geometry::Interval {
            x_lo: 0.0,
            x_hi: 1.0,
            gamma: 0.5,
        };
        ProblemSpec::uniform(g, 1.0, 2.0, 1.0, 1.0)
    }

    #[test]
    fn cold_sweep_matches_warm_branch() {
        let d = Discretization::new(&spec(), 48, 0).unwrap();
        let ls = d.lambda_star().unwrap();
        let grid: Vec<f64> = [0.5, 1.5, 3.0].iter().map(|s| s * ls).collect();
        let seq = cold_sweep(&d, &grid, 1e-10, Execution::Sequential);
        let par = cold_sweep(&d, &grid, 1e-10, Execution::Parallel);
        assert!(matches!(seq[0], Err(Error::WindowViolation { .. })));
        let warm = continuation(&d, &grid, 1e-10).unwrap();
        for (k, (a, b)) in seq.iter().zip(&par).enumerate().skip(1) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert_eq!(a.solution, b.solution);
            let w = warm.entries[k].point().unwrap();
            assert!((a.sup_norm - w.sup_norm).abs() < 1e-8 * w.sup_norm);
        }
    }

    #[test]
    fn branch_is_monotone_and_certified() {
        let d = Discretization::new(&spec(), 64, 0).unwrap();
        let ls = d.lambda_star().unwrap();
        let grid: Vec<f64> = [0.5, 1.0, 1.1, 1.5, 2.0, 4.0].iter().map(|s| s * ls).collect();
        let diag = continuation(&d, &grid, 1e-10).unwrap();
        assert!(matches!(diag.entries[0], PointStatus::Trivial(_)));
        assert!(matches!(diag.entries[1], PointStatus::Skipped { .. }));
        assert_eq!(diag.points().len(), 4);
        assert!(diag.is_monotone());
        let last = diag.points()[3];
        let c = certificate(&d, last.lambda, &last.solution).unwrap();
        assert!(c.sigma_frozen.abs() < 1e-6, "{c:?}");
        assert!(c.sigma_linearized > 0.0);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let d = Discretization::new(&spec(), 16, 0).unwrap();
        assert!(continuation(&d, &[20.0, 15.0], 1e-10).is_err());
    }

    #[test]
    fn beyond_ceiling_is_recorded() {
        let refuge = RefugeRegion::new(Subdomain::One, AxisBox::interval(0.2, 0.3));
        let d = Discretization::new(&spec().with_refuges(vec![refuge]), 64, 0).unwrap();
        let linf = d.lambda_infinity().unwrap().lambda_inf;
        let diag = continuation(&d, &[1.1 * linf], 1e-10).unwrap();
        assert!(matches!(
            diag.entries[0],
            PointStatus::Failed {
                error: Error::WindowViolation { .. },
                ..
            }
        ));
    }
}
