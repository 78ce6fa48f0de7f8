//! Damped Newton iteration on the discrete steady-state equations.

use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::linalg::{dot, BandedLdl, DofMap, SymBanded};
use crate::operators::Discretization;
use sprs::CsMat;

pub const NEWTON_MAX_ITERS: usize = 50;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonRun {
    pub solution: FieldPair,
    pub iterations: usize,
    pub residual: f64,
}

/// `K + B_mu - λ Mass(m) + p Mass(a |u|^(p-1))`.
pub fn jacobian(disc: &Discretization, lambda: f64, u: &[f64]) -> CsMat<f64> {
    let p = disc.spec.p;
    let q: Vec<f64> = u
        .iter()
        .zip(&disc.a_nodal)
        .map(|(v, a)| p * a * v.abs().powf(p - 1.0))
        .collect();
    disc.linear_operator(lambda, Some(&q))
}

/// Free dofs of a Newton solve and the energy factor measuring its residual.
/// Values outside `dofs` stay at whatever the initial vector holds.
pub struct NewtonFrame<'a> {
    pub dofs: &'a DofMap,
    pub energy: &'a BandedLdl,
}

impl NewtonFrame<'_> {
    fn residual(&self, disc: &Discretization, lambda: f64, u: &[f64]) -> (Vec<f64>, f64) {
        let r = self.dofs.restrict(&disc.residual_vector(lambda, u));
        let z = self.energy.solve(&r);
        let n = dot(&r, &z).max(0.0).sqrt();
        (r, n)
    }
}

/// Newton from `init`; converged once the dual residual is below `tol · max(1, ‖u‖∞)`.
pub fn newton_solve(disc: &Discretization, lambda: f64, init: &FieldPair, tol: f64) -> Result<NewtonRun> {
    newton_solve_with(disc, lambda, init, tol, NEWTON_MAX_ITERS)
}

pub fn newton_solve_with(disc: &Discretization, lambda: f64, init: &FieldPair, tol: f64, max_iters: usize) -> Result<NewtonRun> {
    init.check_shape(&disc.mesh)?;
    let frame = NewtonFrame {
        dofs: &disc.dofs,
        energy: disc.energy_factor(),
    };
    let (u, iterations, residual) = newton_in_frame(disc, lambda, &frame, init.to_global(), tol, max_iters)?;
    Ok(NewtonRun {
        solution: disc.field(&u),
        iterations,
        residual,
    })
}

/// Damped Newton on the free dofs of `frame`, clipping negative values.
pub fn newton_in_frame(
    disc: &Discretization,
    lambda: f64,
    frame: &NewtonFrame,
    init: Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let mut u = init;
    let (mut r, mut res) = frame.residual(disc, lambda, &u);
    let target = |u: &[f64]| tol * u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for it in 0..max_iters {
        if res <= target(&u) {
            return Ok((u, it, res));
        }
        let j = jacobian(disc, lambda, &u);
        let ldl = SymBanded::from_csr(&j, frame.dofs).factor().map_err(|e| match e {
            Error::SingularOperator { index, pivot } => Error::SingularJacobian { index, pivot },
            other => other,
        })?;
        let step = ldl.solve(&r);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = u.clone();
            for (k, &g) in frame.dofs.free().iter().enumerate() {
                trial[g] = (u[g] - t * step[k]).max(0.0);
            }
            let (tr, tn) = frame.residual(disc, lambda, &trial);
            if tn < res {
                accepted = Some((trial, tr, tn));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, tr, tn)) => {
                u = trial;
                r = tr;
                res = tn;
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations: it + 1,
                    residual: res,
                })
            }
        }
    }
    if res <= target(&u) {
        return Ok((u, max_iters, res));
    }
    Err(Error::MaxIters {
        iterations: max_iters,
        residual: res,
    })
}
