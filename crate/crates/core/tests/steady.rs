use membrane_core::linalg::dot;
use membrane_core::mesh::{AxisBox, Geometry, RefugeRegion, Subdomain};
use membrane_core::operators::solve_linear;
use membrane_core::spectral::{lambda_star_eigenpair, DEFAULT_TOL};
use membrane_core::steady::{
    build_bracket, certificate, cold_solve, continuation, monotone_solve_from, tighten_bracket, PointStatus, Side,
};
use membrane_core::{Discretization, Error, FieldPair, ProblemSpec};

fn interval(gamma: f64) -> Geometry {
    Geometry::Interval {
        x_lo: 0.0,
        x_hi: 1.0,
        gamma,
    }
}

fn logistic(n: usize) -> Discretization {
    Discretization::new(&ProblemSpec::uniform(interval(0.5), 1.0, 2.0, 1.0, 1.0), n, 0).unwrap()
}

fn degenerate(n: usize) -> Discretization {
    let s = ProblemSpec::uniform(interval(0.5), 1.0, 2.0, 1.0, 1.0).with_refuges(vec![
        RefugeRegion::new(Subdomain::One, AxisBox::interval(0.2, 0.3)),
        RefugeRegion::new(Subdomain::Two, AxisBox::interval(0.6, 0.8)),
    ]);
    Discretization::new(&s, n, 0).unwrap()
}

#[test]
fn decoupled_poisson_matches_the_quadratic() {
    let gamma = 0.4;
    let d = Discretization::new(&ProblemSpec::uniform(interval(gamma), 0.0, 2.0, 1.0, 1.0), 40, 0).unwrap();
    let op = d.block_operator(0.0).unwrap();
    let n1 = d.mesh.node_counts()[0];
    let mut rhs = d.unit_mass.lumped.clone();
    rhs[n1..].iter_mut().for_each(|v| *v = 0.0);
    let u = solve_linear(&op, 0.0, &d.unit_mass, &d.field(&rhs)).unwrap();
    for (p, v) in d.mesh.parts[0].nodes.iter().zip(&u.u1) {
        let exact = p[0] * (2.0 * gamma - p[0]) / 2.0;
        assert!((v - exact).abs() < 1e-12, "x={}: {v} vs {exact}", p[0]);
    }
    assert!(u.u2.iter().all(|v| *v == 0.0));
}

#[test]
fn zero_rhs_gives_zero() {
    let d = logistic(16);
    let op = d.block_operator(1.0).unwrap();
    let u = solve_linear(&op, 2.0, &d.unit_mass, &FieldPair::zeros(&d.mesh)).unwrap();
    assert_eq!(u.sup_norm(), 0.0);
}

#[test]
fn residual_of_scaled_eigenfunction_is_of_order_p() {
    let d = logistic(64);
    let eig = lambda_star_eigenpair(&d, DEFAULT_TOL).unwrap();
    let ls = eig.eigenvalue;
    let r: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&eps| d.residual(ls, &eig.eigenfunction.scaled(eps)))
        .collect();
    for w in r.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.01, "{r:?}");
    }
}

/// Near the threshold `U ≈ ε Φ` with `ε = (λ - λ*) ∫mΦ² / ∫aΦ³`, from projecting the equation on `Φ`.
#[test]
fn bifurcation_amplitude_matches_projection() {
    let d = logistic(128);
    let eig = lambda_star_eigenpair(&d, DEFAULT_TOL).unwrap();
    let ls = eig.eigenvalue;
    let phi = eig.eigenfunction.to_global();
    let cubic: Vec<f64> = phi.iter().zip(&d.a_nodal).map(|(f, a)| a * f * f).collect();
    let m_norm = dot(&phi, &d.m_mass.apply(&phi));
    let a_cubic = dot(&cubic, &d.unit_mass.apply(&phi));
    let sup_phi = eig.eigenfunction.sup_norm();
    for offset in [1e-3, 2e-3] {
        let lambda = ls * (1.0 + offset);
        let u = cold_solve(&d, lambda, DEFAULT_TOL).unwrap();
        let predicted = (lambda - ls) * m_norm / a_cubic * sup_phi;
        let rel = (u.sup_norm - predicted).abs() / predicted;
        assert!(rel < 0.01, "offset {offset}: {} vs {predicted}", u.sup_norm);
    }
}

#[test]
fn large_lambda_approaches_carrying_capacity() {
    let lambda = 400.0;
    let coarse = cold_solve(&logistic(128), lambda, DEFAULT_TOL).unwrap();
    let fine = cold_solve(&logistic(256), lambda, DEFAULT_TOL).unwrap();
    let mid = |u: &FieldPair| *u.u1.last().unwrap();
    assert!((mid(&coarse.solution) / lambda - 1.0).abs() < 1e-3);
    assert!((mid(&fine.solution) - mid(&coarse.solution)).abs() < 1e-3 * lambda);
    assert!(fine.sup_norm < lambda);
}

#[test]
fn degenerate_limits_agree_and_stay_bracketed() {
    let d = degenerate(64);
    let ceiling = d.existence_ceiling().unwrap();
    let ls = d.lambda_star().unwrap();
    for lambda in [ls + 0.3 * (ceiling - ls), ls + 0.8 * (ceiling - ls)] {
        let b = build_bracket(&d, lambda).unwrap();
        let b = tighten_bracket(&d, lambda, &b, 2000).unwrap();
        let below = monotone_solve_from(&d, lambda, &b, Side::Below, 1e-11, 1_000_000).unwrap();
        let above = monotone_solve_from(&d, lambda, &b, Side::Above, 1e-11, 1_000_000).unwrap();
        let (lo, hi) = (below.solution.to_global(), above.solution.to_global());
        let scale = above.solution.sup_norm();
        let gap = lo.iter().zip(&hi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap <= 1e-8 * scale, "lambda {lambda}: gap {gap}");
        let (sub, sup) = (b.sub.to_global(), b.sup.to_global());
        for k in 0..lo.len() {
            assert!(sub[k] <= lo[k] + 1e-12 * scale && hi[k] <= sup[k] + 1e-12 * scale);
        }
        let free_min = d.dofs.free().iter().map(|&g| hi[g]).fold(f64::INFINITY, f64::min);
        assert!(free_min > 0.0);
        let cert = certificate(&d, lambda, &above.solution).unwrap();
        assert!(cert.sigma_frozen.abs() < 1e-6 * lambda, "{cert:?}");
        assert!(cert.sigma_linearized > 0.0);
    }
}

#[test]
fn degenerate_branch_grows_and_stops_at_the_ceiling() {
    let d = degenerate(64);
    let ceiling = d.existence_ceiling().unwrap();
    let ls = d.lambda_star().unwrap();
    let mut grid: Vec<f64> = (0..8).map(|k| ls * 0.5 + k as f64 * (ceiling - 0.5 * ls) / 8.0).collect();
    grid.push(1.05 * ceiling);
    let diagram = continuation(&d, &grid, DEFAULT_TOL).unwrap();
    assert!(diagram.is_monotone());
    assert!(matches!(diagram.entries[0], PointStatus::Trivial(_)));
    assert!(diagram.points().len() >= 5);
    assert!(matches!(
        diagram.entries.last().unwrap(),
        PointStatus::Failed {
            error: Error::WindowViolation { .. },
            ..
        }
    ));
}
