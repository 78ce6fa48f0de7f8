//! Limit regimes: strong crowding (`α → ∞`) and the approach to `λ∞`.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::FieldPair;
use crate::linalg::{DofMap, SymBanded};
use crate::operators::Discretization;
use crate::spectral::{lambda_alpha, EigenResult, TIE_TOL};
use crate::steady::bracket::constant_super_level;
use crate::steady::continuation::{continuation, PointStatus};
use crate::steady::newton::{newton_in_frame, NewtonFrame};

/// Fraction of each refuge box width trimmed from every side to get the blow-up compacts.
pub const COMPACT_SHRINK: f64 = 0.25;
/// Distance kept between the exterior compact and the refuges.
pub const EXTERIOR_MARGIN: f64 = 0.1;

const RAMP_NEWTON_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweepRecord {
    pub alpha: f64,
    pub lambda_alpha: f64,
    /// Eigenfunction normalised to `∫ m Φ² = 1`.
    pub eig: EigenResult,
    /// `λ_α` minus the gradient energy, the membrane energy and `α ∫ a Φ²`.
    pub slacks: [f64; 3],
    /// Share of `∫ m Φ²` carried by refuge nodes.
    pub refuge_mass_fraction: f64,
    /// Per component: share of that component's `∫ m φ_i²` carried by its refuge.
    pub component_refuge_fraction: [f64; 2],
    /// `(∫ m φ_i²)^(1/2)` per component.
    pub component_norms: [f64; 2],
}

fn require_refuges(disc: &Discretization, what: &str) -> Result<()> {
    if disc.mesh.is_degenerate() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("{what} needs at least one refuge")))
    }
}

fn require_ascending(values: &[f64], what: &str) -> Result<()> {
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidSpec(format!("{what} must be strictly ascending")));
    }
    Ok(())
}

pub fn alpha_record(disc: &Discretization, alpha: f64, tol: f64) -> Result<AlphaSweepRecord> {
    let mut eig = lambda_alpha(disc, alpha, tol)?;
    let g = eig.eigenfunction.to_global();
    let scale = 1.0 / disc.m_mass.norm_sq(&g).sqrt();
    eig.eigenfunction = eig.eigenfunction.scaled(scale);
    let phi: Vec<f64> = g.iter().map(|v| v * scale).collect();
    let lam = eig.eigenvalue;

    let grad = disc.gradient_norm(&phi).powi(2);
    let membrane = disc.interface_form(&phi);
    let crowd: f64 = (0..phi.len())
        .map(|k| alpha * disc.a_nodal[k] * disc.weights[k] * phi[k] * phi[k])
        .sum();

    let refuge = disc.mesh.refuge_mask();
    let mut total = [0.0; 2];
    let mut inside = [0.0; 2];
    for (k, v) in phi.iter().enumerate() {
        let c = disc.m_nodal[k] * disc.weights[k] * v * v;
        let i = disc.mesh.locate(k).0.index();
        total[i] += c;
        if refuge[k] {
            inside[i] += c;
        }
    }
    let frac = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let mut component_norms = [0.0; 2];
    for (i, sub) in crate::mesh::Subdomain::BOTH.into_iter().enumerate() {
        let mut only = vec![0.0; phi.len()];
        for (k, v) in phi.iter().enumerate() {
            if disc.mesh.locate(k).0 == sub {
                only[k] = *v;
            }
        }
        component_norms[i] = disc.m_mass.norm_sq(&only).max(0.0).sqrt();
    }
    Ok(AlphaSweepRecord {
        alpha,
        lambda_alpha: lam,
        slacks: [lam - grad, lam - membrane, lam - crowd],
        refuge_mass_fraction: frac(inside[0] + inside[1], total[0] + total[1]),
        component_refuge_fraction: [frac(inside[0], total[0]), frac(inside[1], total[1])],
        component_norms,
        eig,
    })
}

/// Principal eigenpairs with crowding potential `α a` for each `α`.
pub fn alpha_sweep(disc: &Discretization, alphas: &[f64], tol: f64, exec: Execution) -> Result<Vec<AlphaSweepRecord>> {
    require_refuges(disc, "alpha sweep")?;
    require_ascending(alphas, "alpha list")?;
    exec.map(alphas, |&a| alpha_record(disc, a, tol)).into_iter().collect()
}

/// Nodes of each refuge box shrunk by `fraction` per side; empty where a subdomain has no refuge.
pub fn refuge_compacts(disc: &Discretization, fraction: f64) -> [Vec<usize>; 2] {
    let dim = disc.mesh.dimension();
    let mut out = [Vec::new(), Vec::new()];
    for r in &disc.mesh.refuges {
        out[r.subdomain.index()] = disc.mesh.nodes_in(r.subdomain, &r.bounds.shrink(fraction, dim));
    }
    out
}

/// Free nodes at distance at least `margin` from every refuge box.
pub fn exterior_compact(disc: &Discretization, margin: f64) -> Vec<usize> {
    let dim = disc.mesh.dimension();
    disc.dofs
        .free()
        .iter()
        .copied()
        .filter(|&g| {
            let (sub, k) = disc.mesh.locate(g);
            let p = disc.mesh.part(sub).nodes[k];
            disc.mesh.refuges.iter().all(|r| r.bounds.distance(&p, dim) >= margin)
        })
        .collect()
}

fn max_over(u: &[f64], nodes: &[usize]) -> f64 {
    nodes.iter().map(|&g| u[g]).fold(0.0, f64::max)
}

/// Largest `|u - v|` over `nodes`.
pub fn sup_difference(u: &[f64], v: &[f64], nodes: &[usize]) -> f64 {
    nodes.iter().map(|&g| (u[g] - v[g]).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupRecord {
    pub lambda: f64,
    pub max_on_k: [f64; 2],
    pub sup_norm: f64,
    pub solution: FieldPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupEntry {
    pub lambda: f64,
    pub outcome: Result<BlowupRecord>,
}

/// Warm-started solves along `lambdas`, recording the maxima on the shrunk refuge boxes.
pub fn blowup_sweep(disc: &Discretization, lambdas: &[f64], tol: f64) -> Result<Vec<BlowupEntry>> {
    require_refuges(disc, "blow-up sweep")?;
    require_ascending(lambdas, "lambda list")?;
    let compacts = refuge_compacts(disc, COMPACT_SHRINK);
    let diagram = continuation(disc, lambdas, tol)?;
    Ok(diagram
        .entries
        .into_iter()
        .map(|status| {
            let lambda = status.lambda();
            let outcome = match status {
                PointStatus::Solved(b) | PointStatus::Trivial(b) => {
                    let g = b.solution.to_global();
                    Ok(BlowupRecord {
                        lambda,
                        max_on_k: [max_over(&g, &compacts[0]), max_over(&g, &compacts[1])],
                        sup_norm: b.sup_norm,
                        solution: b.solution,
                    })
                }
                PointStatus::Skipped { .. } => Err(Error::WindowViolation {
                    lambda,
                    lower: diagram.lambda_star,
                    upper: diagram.lambda_infinity,
                }),
                PointStatus::Failed { error, .. } => Err(error),
            };
            BlowupEntry { lambda, outcome }
        })
        .collect())
}

/// Which refuges carry the ramp in the exterior problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampMode {
    /// Every refuge is held at the ramp value.
    AllRefuges,
    /// Refuges whose eigenvalue attains λ∞ ramp; the others are held at zero.
    WinnersOnly,
    /// Refuges attaining λ∞ ramp; the others stay unknowns of the problem.
    WinnersOnlyLoserFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LargeSolutionApprox {
    pub lambda: f64,
    pub mode: RampMode,
    pub ramp_values: Vec<f64>,
    /// Full-length states; refuge nodes carry the imposed data.
    pub solutions: Vec<FieldPair>,
    pub extrapolated: FieldPair,
    pub compact: Vec<usize>,
    /// Sup over the compact of successive differences.
    pub differences: Vec<f64>,
    pub newton_iters: Vec<usize>,
}

impl LargeSolutionApprox {
    /// Whether every ramp solution dominates the previous one node-wise.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.solutions.windows(2).all(|w| {
            let (a, b) = (w[0].to_global(), w[1].to_global());
            a.iter().zip(&b).all(|(x, y)| *y >= x - slack)
        })
    }
}

/// Per-node data of the exterior problem: `Some(scale)` multiplies the ramp value, `None` is free.
fn ramp_pattern(disc: &Discretization, mode: RampMode) -> Result<Vec<Option<f64>>> {
    let info = disc.lambda_infinity()?;
    let mut pattern = vec![None; disc.n()];
    for r in &disc.mesh.refuges {
        let own = info.per_refuge[r.subdomain.index()];
        let wins = (own - info.lambda_inf).abs() <= TIE_TOL * info.lambda_inf;
        let scale = match mode {
            RampMode::AllRefuges => Some(1.0),
            _ if wins => Some(1.0),
            RampMode::WinnersOnly => Some(0.0),
            RampMode::WinnersOnlyLoserFree => None,
        };
        let part = disc.mesh.part(r.subdomain);
        for k in 0..part.node_count() {
            if part.refuge[k] {
                pattern[disc.mesh.global_index(r.subdomain, k)] = scale;
            }
        }
    }
    Ok(pattern)
}

/// Exterior problem with refuge nodes held at each ramp value, solved by Newton
/// warm-started along the ramp.
pub fn minimal_large_solution(
    disc: &Discretization,
    lambda: f64,
    ramp: &[f64],
    mode: RampMode,
    compact: &[usize],
    tol: f64,
    stagnation_tol: f64,
) -> Result<LargeSolutionApprox> {
    require_refuges(disc, "large-solution ramp")?;
    require_ascending(ramp, "ramp")?;
    if ramp.is_empty() || ramp[0] <= 0.0 {
        return Err(Error::InvalidSpec("ramp values must be positive".into()));
    }
    let pattern = ramp_pattern(disc, mode)?;
    let dirichlet = disc.mesh.dirichlet_mask();
    let fixed: Vec<bool> = (0..disc.n()).map(|g| dirichlet[g] || pattern[g].is_some()).collect();
    let dofs = DofMap::from_mask(&fixed);
    let energy = SymBanded::from_csr(&disc.laplace, &dofs).factor()?;
    let frame = NewtonFrame {
        dofs: &dofs,
        energy: &energy,
    };
    let level = constant_super_level(disc, lambda);

    let mut solutions: Vec<FieldPair> = Vec::with_capacity(ramp.len());
    let mut newton_iters = Vec::with_capacity(ramp.len());
    let mut u = vec![0.0; disc.n()];
    for (j, &m) in ramp.iter().enumerate() {
        for g in 0..disc.n() {
            if let Some(s) = pattern[g] {
                u[g] = s * m;
            } else if j == 0 && !dirichlet[g] {
                u[g] = m.max(level);
            }
        }
        let (next, iters, _) = newton_in_frame(disc, lambda, &frame, u, tol, RAMP_NEWTON_ITERS)?;
        u = next;
        solutions.push(disc.field(&u));
        newton_iters.push(iters);
    }
    let globals: Vec<Vec<f64>> = solutions.iter().map(FieldPair::to_global).collect();
    let differences: Vec<f64> = globals.windows(2).map(|w| sup_difference(&w[0], &w[1], compact)).collect();
    if let Some(&last) = differences.last() {
        if last > stagnation_tol {
            return Err(Error::NotStagnating {
                difference: last,
                tolerance: stagnation_tol,
            });
        }
    }
    Ok(LargeSolutionApprox {
        lambda,
        mode,
        ramp_values: ramp.to_vec(),
        extrapolated: solutions.last().cloned().expect("ramp is non-empty"),
        solutions,
        compact: compact.to_vec(),
        differences,
        newton_iters,
    })
}

/// `sup_K |U_λ - U_large|` along `lambdas`, with `K` the compact of `large`.
pub fn exterior_convergence(disc: &Discretization, lambdas: &[f64], large: &LargeSolutionApprox, tol: f64) -> Result<Vec<(f64, f64)>> {
    require_ascending(lambdas, "lambda list")?;
    let reference = large.extrapolated.to_global();
    let diagram = continuation(disc, lambdas, tol)?;
    diagram
        .entries
        .into_iter()
        .map(|status| match status {
            PointStatus::Solved(b) => Ok((b.lambda, sup_difference(&b.solution.to_global(), &reference, &large.compact))),
            PointStatus::Failed { error, .. } => Err(error),
            other => Err(Error::WindowViolation {
                lambda: other.lambda(),
                lower: diagram.lambda_star,
                upper: diagram.lambda_infinity,
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{AxisBox, Geometry, RefugeRegion, Subdomain};
    use crate::problem::ProblemSpec;

    fn two_refuges(a: f64, p: f64) -> ProblemSpec {
        let g = Geometry::Interval {
            x_lo: 0.0,
            x_hi: 1.0,
            gamma: 0.5,
        };
        ProblemSpec::uniform(g, 1.0, p, 1.0, a).with_refuges(vec![
            RefugeRegion::new(Subdomain::One, AxisBox::interval(0.2, 0.3)),
            RefugeRegion::new(Subdomain::Two, AxisBox::interval(0.6, 0.8)),
        ])
    }

    #[test]
    fn alpha_zero_is_lambda_star_and_slacks_hold() {
        let d = Discretization::new(&two_refuges(1.0, 2.0), 40, 0).unwrap();
        let recs = alpha_sweep(&d, &[0.0, 10.0, 1000.0], 1e-10, Execution::Sequential).unwrap();
        assert!((recs[0].lambda_alpha - d.lambda_star().unwrap()).abs() < 1e-8);
        for r in &recs {
            assert!(r.slacks.iter().all(|s| *s >= -1e-8 * (1.0 + r.lambda_alpha)), "{:?}", r.slacks);
            assert!((0.0..=1.0).contains(&r.refuge_mass_fraction));
        }
        assert!(recs.windows(2).all(|w| w[1].lambda_alpha > w[0].lambda_alpha));
    }

    #[test]
    fn sweeps_need_refuges() {
        let g = Geometry::Interval {
            x_lo: 0.0,
            x_hi: 1.0,
            gamma: 0.5,
        };
        let d = Discretization::new(&ProblemSpec::uniform(g, 1.0, 2.0, 1.0, 1.0), 16, 0).unwrap();
        assert!(alpha_sweep(&d, &[1.0], 1e-10, Execution::Sequential).is_err());
        assert!(blowup_sweep(&d, &[20.0], 1e-10).is_err());
    }

    #[test]
    fn blowup_records_window_violations() {
        let d = Discretization::new(&two_refuges(1.0, 2.0), 40, 0).unwrap();
        let linf = d.existence_ceiling().unwrap();
        let out = blowup_sweep(&d, &[0.9 * linf, 1.01 * linf], 1e-10).unwrap();
        assert!(out[0].outcome.is_ok());
        assert!(matches!(out[1].outcome, Err(Error::WindowViolation { .. })));
    }

    #[test]
    fn ramp_solutions_increase_with_data() {
        let d = Discretization::new(&two_refuges(100.0, 3.0), 40, 0).unwrap();
        let linf = d.existence_ceiling().unwrap();
        let compact = exterior_compact(&d, EXTERIOR_MARGIN);
        let large = minimal_large_solution(&d, linf, &[10.0, 100.0, 1000.0], RampMode::AllRefuges, &compact, 1e-10, f64::INFINITY).unwrap();
        assert!(large.is_monotone(1e-9));
        assert!(large.differences[1] < large.differences[0]);
    }
}
