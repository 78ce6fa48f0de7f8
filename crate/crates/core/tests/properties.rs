use membrane_core::linalg::DofMap;
use membrane_core::mesh::{AxisBox, Geometry, RefugeRegion, Subdomain};
use membrane_core::operators::{asymmetry, solve_linear};
use membrane_core::spectral::{sigma_of_lambda, SigmaDomain, DEFAULT_TOL};
use membrane_core::{Discretization, FieldPair, ProblemSpec};
use proptest::prelude::*;

fn interval(gamma: f64) -> Geometry {
    Geometry::Interval {
        x_lo: 0.0,
        x_hi: 1.0,
        gamma,
    }
}

fn square(gamma: f64) -> Geometry {
    Geometry::Rectangle {
        x_lo: 0.0,
        x_hi: 1.0,
        y_lo: 0.0,
        y_hi: 1.0,
        gamma,
    }
}

fn with_refuges(s: ProblemSpec) -> ProblemSpec {
    s.with_refuges(vec![
        RefugeRegion::new(Subdomain::One, AxisBox::interval(0.1, 0.3)),
        RefugeRegion::new(Subdomain::Two, AxisBox::interval(0.6, 0.9)),
    ])
}

fn disc(gamma: f64, mu: f64, n: usize, two_d: bool) -> Discretization {
    let g = if two_d { square(gamma) } else { interval(gamma) };
    Discretization::new(&ProblemSpec::uniform(g, mu, 2.0, 1.0, 1.0), n, if two_d { n } else { 0 }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn assembled_operators_are_exactly_symmetric(
        gamma in 0.2..0.8f64,
        mu in 0.0..50.0f64,
        lambda in -20.0..200.0f64,
        n in 3usize..12,
        two_d in any::<bool>(),
        seed in prop::collection::vec(0.0..10.0f64, 1..8),
    ) {
        let d = disc(gamma, mu, n, two_d);
        let q: Vec<f64> = (0..d.n()).map(|k| seed[k % seed.len()]).collect();
        prop_assert_eq!(asymmetry(&d.laplace), 0.0);
        prop_assert_eq!(asymmetry(&d.linear_operator(lambda, Some(&q))), 0.0);
        prop_assert_eq!(asymmetry(&d.block_operator(3.0).unwrap().full()), 0.0);
    }

    #[test]
    fn zero_state_always_solves(lambda in -100.0..1e4f64, mu in 0.0..10.0f64, two_d in any::<bool>()) {
        let d = disc(0.5, mu, 8, two_d);
        let zero = FieldPair::zeros(&d.mesh);
        prop_assert_eq!(d.residual(lambda, &zero), 0.0);
    }

    #[test]
    fn field_pair_round_trips(n in 2usize..20, two_d in any::<bool>(), scale in -3.0..3.0f64) {
        let d = disc(0.4, 1.0, n, two_d);
        let g: Vec<f64> = (0..d.n()).map(|k| scale * (k as f64).sin()).collect();
        let f = FieldPair::from_global(&d.mesh, &g).unwrap();
        prop_assert!(f.check_shape(&d.mesh).is_ok());
        prop_assert_eq!(f.to_global(), g.clone());
        prop_assert!(FieldPair::from_global(&d.mesh, &g[1..]).is_err());
    }

    #[test]
    fn dof_map_restrict_extend(mask in prop::collection::vec(any::<bool>(), 1..64)) {
        let dofs = DofMap::from_mask(&mask);
        let x: Vec<f64> = (0..mask.len()).map(|k| k as f64 + 1.0).collect();
        let back = dofs.extend(&dofs.restrict(&x));
        for k in 0..mask.len() {
            prop_assert_eq!(back[k], if mask[k] { 0.0 } else { x[k] });
        }
        prop_assert_eq!(dofs.n_free(), mask.iter().filter(|m| !**m).count());
    }

    #[test]
    fn resolvent_preserves_the_positive_cone(
        mu in 0.0..20.0f64,
        shift in 0.0..50.0f64,
        alpha in 0.0..20.0f64,
        two_d in any::<bool>(),
        rhs in prop::collection::vec(0.0..1.0f64, 16),
    ) {
        let d = disc(0.35, mu, 8, two_d);
        let op = d.block_operator(alpha).unwrap();
        let g: Vec<f64> = (0..d.n()).map(|k| rhs[k % rhs.len()]).collect();
        let u = solve_linear(&op, shift, &d.unit_mass, &d.field(&g)).unwrap();
        prop_assert!(u.min() >= 0.0, "{}", u.min());
    }

    #[test]
    fn interval_jump_form_is_exact(mu in 0.0..20.0f64, u1 in -5.0..5.0f64, u2 in -5.0..5.0f64) {
        let d = disc(0.5, mu, 6, false);
        let mut g = vec![0.0; d.n()];
        let (a, b) = d.mesh.interface_pairs[0];
        g[d.mesh.global_index(Subdomain::One, a)] = u1;
        g[d.mesh.global_index(Subdomain::Two, b)] = u2;
        let form = d.interface_form(&g);
        prop_assert!((form - mu * (u2 - u1).powi(2)).abs() <= 1e-14 * (1.0 + form.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sigma_decreases_in_lambda(lambda in -20.0..150.0f64, step in 0.1..30.0f64, degenerate in any::<bool>()) {
        let mut s = ProblemSpec::uniform(interval(0.45), 0.7, 2.0, 1.0, 1.0);
        if degenerate {
            s = with_refuges(s);
        }
        let d = Discretization::new(&s, 32, 0).unwrap();
        let lo = sigma_of_lambda(&d, lambda, SigmaDomain::Full, None, DEFAULT_TOL).unwrap();
        let hi = sigma_of_lambda(&d, lambda + step, SigmaDomain::Full, None, DEFAULT_TOL).unwrap();
        prop_assert!(hi < lo, "{lo} -> {hi}");
    }

    #[test]
    fn sigma_increases_with_the_potential(
        base in prop::collection::vec(0.0..20.0f64, 8),
        bump in prop::collection::vec(0.0..20.0f64, 8),
        lambda in 0.0..60.0f64,
    ) {
        let d = Discretization::new(&ProblemSpec::uniform(interval(0.45), 0.7, 2.0, 1.0, 1.0), 32, 0).unwrap();
        let q1: Vec<f64> = (0..d.n()).map(|k| base[k % 8]).collect();
        let q2: Vec<f64> = (0..d.n()).map(|k| base[k % 8] + bump[(k / 8) % 8]).collect();
        let s1 = sigma_of_lambda(&d, lambda, SigmaDomain::Full, Some(&q1), DEFAULT_TOL).unwrap();
        let s2 = sigma_of_lambda(&d, lambda, SigmaDomain::Full, Some(&q2), DEFAULT_TOL).unwrap();
        prop_assert!(s1 <= s2 + 1e-9 * s2.abs().max(1.0), "{s1} > {s2}");
    }

    #[test]
    fn restriction_to_refuges_raises_sigma(lambda in 0.0..200.0f64) {
        let d = Discretization::new(&with_refuges(ProblemSpec::uniform(interval(0.45), 0.7, 2.0, 1.0, 1.0)), 40, 0).unwrap();
        let full = sigma_of_lambda(&d, lambda, SigmaDomain::Full, None, DEFAULT_TOL).unwrap();
        let refuges = sigma_of_lambda(&d, lambda, SigmaDomain::RefugesOnly, None, DEFAULT_TOL).unwrap();
        prop_assert!(refuges > full, "{full} vs {refuges}");
    }
}
