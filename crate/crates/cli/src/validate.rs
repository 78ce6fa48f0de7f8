//! The invariant suite behind the `validate` command.

use membrane_core::limits::{alpha_sweep, blowup_sweep, exterior_compact, minimal_large_solution, RampMode, EXTERIOR_MARGIN};
use membrane_core::linalg::{csr_apply, max_abs, DofMap};
use membrane_core::mesh::build_mesh;
use membrane_core::operators::asymmetry;
use membrane_core::spectral::{
    certify_gap, lambda_star_eigenpair, sigma_in_mu, sigma_of_lambda, spectral_radius_k, KLambdaSpec, SigmaDomain,
};
use membrane_core::steady::{
    build_bracket, certificate, continuation, is_subsolution, is_supersolution, jacobian, monotone_solve_from, newton_solve, tighten_bracket, Side,
};
use membrane_core::{Discretization, Execution, FieldPair, Geometry, MassKind, ProblemSpec, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantRow {
    pub invariant: &'static str,
    pub module: &'static str,
    pub n: usize,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// Error text when the check could not be carried out.
    pub note: Option<String>,
}

/// One check: the measured value, the bound it is held to, and whether it passed.
type Check = Result<(f64, f64, bool)>;

struct Suite {
    n: usize,
    rows: Vec<InvariantRow>,
}

impl Suite {
    fn record(&mut self, module: &'static str, invariant: &'static str, check: Check) {
        let (value, threshold, passed, note) = match check {
            Ok((v, t, p)) => (v, t, p, None),
            Err(e) => (f64::NAN, f64::NAN, false, Some(e.to_string())),
        };
        self.rows.push(InvariantRow {
            invariant,
            module,
            n: self.n,
            passed,
            value,
            threshold,
            note,
        });
    }
}

fn at_most(value: f64, threshold: f64) -> Check {
    Ok((value, threshold, value <= threshold))
}

fn domain_measure(g: &Geometry) -> f64 {
    match *g {
        Geometry::Interval { x_lo, x_hi, .. } => x_hi - x_lo,
        Geometry::Rectangle {
            x_lo, x_hi, y_lo, y_hi, ..
        } => (x_hi - x_lo) * (y_hi - y_lo),
    }
}

/// A λ inside the existence window, away from both ends.
pub fn interior_lambda(disc: &Discretization) -> Result<f64> {
    let ls = disc.lambda_star()?;
    let ceil = disc.existence_ceiling()?;
    Ok((1.5 * ls).min(ls + 0.5 * (ceil - ls)))
}

fn sup_diff(a: &FieldPair, b: &FieldPair) -> f64 {
    a.to_global()
        .iter()
        .zip(b.to_global())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn mesh_rows(s: &mut Suite, disc: &Discretization, ny: usize) {
    s.record("mesh", "mesh_consistency", disc.mesh.check_consistency().map(|_| (0.0, 0.0, true)));
    let nests = build_mesh(disc.spec.geometry, 2 * s.n, 2 * ny).map(|fine| {
        let mut worst = 0.0f64;
        for (c, f) in disc.mesh.parts.iter().zip(&fine.parts) {
            for (k, p) in c.nodes.iter().enumerate() {
                let (i, j) = c.grid.ij(k);
                let q = f.nodes[f.grid.node_index(2 * i, 2 * j)];
                worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
            }
        }
        (worst, 1e-12, worst <= 1e-12)
    });
    s.record("mesh", "refinement_nests_nodes", nests);
}

fn operator_rows(s: &mut Suite, disc: &Discretization) {
    let ls = disc.lambda_star().unwrap_or(1.0);
    let a_op = disc.linear_operator(ls, Some(&disc.a_nodal));
    s.record("operators", "operator_symmetry", at_most(asymmetry(&disc.laplace).max(asymmetry(&a_op)), 0.0));
    let k = disc.stiffness.full();
    let ones = vec![1.0; disc.n()];
    let scale = k.diag().data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    s.record("operators", "stiffness_annihilates_constants", at_most(max_abs(&csr_apply(&k, &ones)), 1e-12 * scale));
    let measure = domain_measure(&disc.spec.geometry);
    s.record("operators", "mass_partition_of_unity", at_most((disc.unit_mass.total() - measure).abs(), 1e-12));
    let zero = FieldPair::zeros(&disc.mesh);
    s.record("operators", "zero_solves_residual", at_most(disc.residual(2.0 * ls, &zero), 0.0));
}

fn spectral_rows(s: &mut Suite, disc: &Discretization, tol: f64) {
    let eig = lambda_star_eigenpair(disc, tol);
    s.record(
        "spectral",
        "principal_positivity",
        eig.map(|e| {
            let m = (0..2)
                .filter(|&c| !e.positivity.zero_component[c])
                .map(|c| e.positivity.min_interior[c])
                .fold(f64::INFINITY, f64::min);
            (m, 0.0, e.positivity.strictly_positive())
        }),
    );
    let ls = match disc.lambda_star() {
        Ok(v) => v,
        Err(e) => {
            s.record("spectral", "lambda_star", Err(e));
            return;
        }
    };
    s.record(
        "spectral",
        "principal_eigenvalue_simple",
        certify_gap(&disc.laplace, &disc.m_mass.matrix, &disc.dofs, ls, 1e-6 * ls).map(|ok| (ls, 1e-6 * ls, ok)),
    );
    let sig = |lam: f64, q: Option<&[f64]>, d: SigmaDomain| sigma_of_lambda(disc, lam, d, q, tol);
    s.record(
        "spectral",
        "sigma_vanishes_at_lambda_star",
        sig(ls, None, SigmaDomain::Full).and_then(|v| at_most(v.abs(), 1e-8 * ls.max(1.0))),
    );
    s.record(
        "spectral",
        "sigma_decreasing_in_lambda",
        (|| {
            let v = [sig(0.5 * ls, None, SigmaDomain::Full)?, sig(ls, None, SigmaDomain::Full)?, sig(1.5 * ls, None, SigmaDomain::Full)?];
            Ok((v[0] - v[2], 0.0, v[0] > v[1] && v[1] > v[2]))
        })(),
    );
    s.record(
        "spectral",
        "sigma_increasing_in_potential",
        (|| {
            let lo = sig(ls, None, SigmaDomain::Full)?;
            let hi = sig(ls, Some(&disc.a_nodal), SigmaDomain::Full)?;
            Ok((hi - lo, 0.0, hi > lo))
        })(),
    );
    s.record(
        "spectral",
        "sigma_nondecreasing_in_mu",
        (|| {
            let mu = disc.spec.mu.max(0.1);
            let g = disc.mesh.parts[0].grid;
            let ny = if disc.mesh.dimension() == 1 { 0 } else { g.cells[1] };
            let v = sigma_in_mu(&disc.spec, &[0.5 * mu, mu, 2.0 * mu], s.n, ny, tol, Execution::default())?;
            let drop = v.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-9 * v[2].1.abs().max(1.0);
            Ok((drop, slack, drop <= slack))
        })(),
    );
    if disc.mesh.is_degenerate() {
        s.record(
            "spectral",
            "sigma_increases_on_restriction",
            (|| {
                let full = sig(ls, None, SigmaDomain::Full)?;
                let refuge = sig(ls, None, SigmaDomain::RefugesOnly)?;
                Ok((refuge - full, 0.0, refuge > full))
            })(),
        );
    }
    s.record(
        "spectral",
        "k_radius_at_zero_lambda",
        (|| {
            let k = KLambdaSpec::standard(disc, 0.0, None, tol)?;
            let r = spectral_radius_k(disc, &k, None, tol)?;
            let sigma_f = sig(0.0, None, SigmaDomain::Full)?;
            let expected = (k.shift + k.omega) / (k.shift + sigma_f);
            at_most((r.radius - expected).abs(), 1e-8)
        })(),
    );
}

/// Descent steps applied to the supersolution before the two-sided runs.
const TIGHTEN_STEPS: usize = 2000;

fn steady_rows(s: &mut Suite, disc: &Discretization, tol: f64, max_iters: usize) {
    let lambda = match interior_lambda(disc) {
        Ok(l) => l,
        Err(e) => {
            s.record("steady", "window", Err(e));
            return;
        }
    };
    let bracket = match build_bracket(disc, lambda) {
        Ok(b) => b,
        Err(e) => {
            s.record("steady", "bracket_ordering", Err(e));
            return;
        }
    };
    let order = bracket
        .sub
        .to_global()
        .iter()
        .zip(bracket.sup.to_global())
        .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    let ok = order <= 0.0 && is_subsolution(disc, lambda, &bracket.sub) && is_supersolution(disc, lambda, &bracket.sup);
    s.record("steady", "bracket_ordering", Ok((order, 0.0, ok)));

    let iters = max_iters.max(200_000);
    let bracket = match tighten_bracket(disc, lambda, &bracket, TIGHTEN_STEPS) {
        Ok(b) => b,
        Err(e) => {
            s.record("steady", "monotone_two_sided_agreement", Err(e));
            return;
        }
    };
    let below = monotone_solve_from(disc, lambda, &bracket, Side::Below, 0.1 * tol, iters);
    let above = monotone_solve_from(disc, lambda, &bracket, Side::Above, 0.1 * tol, iters);
    let (below, above) = match (below, above) {
        (Ok(b), Ok(a)) => (b, a),
        (Err(e), _) | (_, Err(e)) => {
            s.record("steady", "monotone_two_sided_agreement", Err(e));
            return;
        }
    };
    s.record(
        "steady",
        "monotone_two_sided_agreement",
        at_most(sup_diff(&below.solution, &above.solution), 1e-7),
    );
    let u = below.solution;
    let g = u.to_global();
    let min_free = disc.dofs.free().iter().map(|&k| g[k]).fold(f64::INFINITY, f64::min);
    s.record("steady", "solution_positivity", Ok((min_free, 0.0, min_free > 0.0)));

    s.record(
        "steady",
        "newton_quadratic_tail",
        newton_solve(disc, lambda, &u, tol).map(|r| (r.iterations as f64, 3.0, r.iterations <= 3)),
    );
    s.record(
        "steady",
        "eigenvalue_certificates",
        certificate(disc, lambda, &u).map(|c| (c.sigma_frozen.abs(), 1e-6, c.sigma_frozen.abs() <= 1e-6 && c.sigma_linearized > 0.0)),
    );
    s.record("steady", "jacobian_finite_difference", Ok(jacobian_fd_ratio(disc, lambda, &g)));
    let ls = disc.lambda_star().unwrap_or(lambda);
    let grid: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|f| ls + f * (lambda - ls)).collect();
    s.record(
        "steady",
        "branch_sup_norm_increasing",
        continuation(disc, &grid, tol).map(|d| (d.points().len() as f64, grid.len() as f64, d.points().len() == grid.len() && d.is_monotone())),
    );
}

/// First-order finite-difference error ratio between step sizes 1e-4 and 1e-5;
/// a consistent Jacobian gives roughly 0.1.
fn jacobian_fd_ratio(disc: &Discretization, lambda: f64, u: &[f64]) -> (f64, f64, bool) {
    let dofs: &DofMap = &disc.dofs;
    let mut v = vec![0.0; disc.n()];
    for (k, &g) in dofs.free().iter().enumerate() {
        v[g] = ((k as f64) * 0.37).sin();
    }
    let scale = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let jv = csr_apply(&jacobian(disc, lambda, u), &v);
    let r0 = disc.residual_vector(lambda, u);
    let err = |tau: f64| {
        let ut: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + tau * scale * b).collect();
        let rt = disc.residual_vector(lambda, &ut);
        dofs.free()
            .iter()
            .map(|&g| ((rt[g] - r0[g]) / (tau * scale) - jv[g]).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(1e-4), err(1e-5));
    let ratio = if e1 > 0.0 { e2 / e1 } else { 0.0 };
    (ratio, 0.2, ratio <= 0.2)
}

fn limit_rows(s: &mut Suite, disc: &Discretization, tol: f64) {
    let alphas = [1.0, 1e2, 1e4];
    match alpha_sweep(disc, &alphas, tol, Execution::default()) {
        Ok(recs) => {
            let worst = recs
                .iter()
                .map(|r| r.slacks.iter().fold(f64::INFINITY, |m, v| m.min(*v)) / (1.0 + r.lambda_alpha))
                .fold(f64::INFINITY, f64::min);
            let fractions = recs.iter().all(|r| (0.0..=1.0).contains(&r.refuge_mass_fraction));
            s.record("limits", "alpha_slacks_nonnegative", Ok((worst, -1e-8, worst >= -1e-8 && fractions)));
            let inc = recs.windows(2).all(|w| w[1].lambda_alpha > w[0].lambda_alpha);
            s.record("limits", "lambda_alpha_increasing", Ok((recs[recs.len() - 1].lambda_alpha, 0.0, inc)));
            let m_min = disc.m_nodal.iter().copied().fold(f64::INFINITY, f64::min);
            s.record(
                "limits",
                "lambda_alpha_below_refuge_bound",
                sigma_of_lambda(disc, 0.0, SigmaDomain::RefugesOnly, None, tol).map(|sig| {
                    let bound = sig / m_min;
                    let top = recs.iter().map(|r| r.lambda_alpha).fold(0.0, f64::max);
                    (top, bound, top < bound)
                }),
            );
        }
        Err(e) => s.record("limits", "alpha_slacks_nonnegative", Err(e)),
    }
    let ceil = match disc.existence_ceiling() {
        Ok(c) => c,
        Err(e) => {
            s.record("limits", "blowup_monotone_in_lambda", Err(e));
            return;
        }
    };
    let lambdas: Vec<f64> = (0..3).map(|j| ceil * (1.0 - 0.1 * 0.5f64.powi(j))).collect();
    s.record(
        "limits",
        "blowup_monotone_in_lambda",
        blowup_sweep(disc, &lambdas, tol).map(|entries| {
            let sols: Vec<Vec<f64>> = entries
                .iter()
                .filter_map(|e| e.outcome.as_ref().ok().map(|r| r.solution.to_global()))
                .collect();
            let worst = sols
                .windows(2)
                .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect::<Vec<_>>())
                .fold(f64::NEG_INFINITY, f64::max);
            (worst, 0.0, sols.len() == lambdas.len() && worst <= 0.0)
        }),
    );
    let compact = exterior_compact(disc, EXTERIOR_MARGIN);
    s.record(
        "limits",
        "ramp_monotone",
        minimal_large_solution(disc, ceil, &[10.0, 100.0], RampMode::AllRefuges, &compact, tol, f64::INFINITY)
            .map(|l| (l.differences.first().copied().unwrap_or(0.0), 0.0, l.is_monotone(1e-9))),
    );
}

/// Every invariant row at one resolution.
pub fn validate_at(spec: &ProblemSpec, n: usize, ny: usize, mass: MassKind, tol: f64, max_iters: usize) -> Vec<InvariantRow> {
    let mut s = Suite { n, rows: Vec::new() };
    let disc = match Discretization::with_mass(spec, n, ny, mass) {
        Ok(d) => d,
        Err(e) => {
            s.record("mesh", "discretization", Err(e));
            return s.rows;
        }
    };
    mesh_rows(&mut s, &disc, ny);
    operator_rows(&mut s, &disc);
    spectral_rows(&mut s, &disc, tol);
    steady_rows(&mut s, &disc, tol, max_iters);
    if disc.mesh.is_degenerate() {
        limit_rows(&mut s, &disc, tol);
    }
    s.rows
}

/// Resolutions the suite runs at.
pub const VALIDATE_RESOLUTIONS: [usize; 2] = [128, 256];

/// The suite at every resolution in [`VALIDATE_RESOLUTIONS`]; rows come back coarse first.
pub fn validate(spec: &ProblemSpec, two_d: bool, mass: MassKind, tol: f64, max_iters: usize, exec: Execution) -> Vec<InvariantRow> {
    exec.map(&VALIDATE_RESOLUTIONS, |&n| validate_at(spec, n, if two_d { n } else { 0 }, mass, tol, max_iters))
        .into_iter()
        .flatten()
        .collect()
}
