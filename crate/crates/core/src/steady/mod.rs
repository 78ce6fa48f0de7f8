//! Positive steady states: brackets, monotone iteration, Newton and continuation.

pub mod bracket;
pub mod continuation;
pub mod monotone;
pub mod newton;

pub use bracket::{build_bracket, build_upper_bracket, check_window, is_subsolution, is_supersolution, MonotoneBracket, SuperKind};
pub use continuation::{certificate, cold_solve, cold_sweep, continuation, BifurcationDiagram, BranchPoint, Certificate, PointStatus};
pub use monotone::{monotone_solve, monotone_solve_from, tighten_bracket, MonotoneRun, Side};
pub use newton::{jacobian, newton_solve, NewtonRun};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Geometry;
    use crate::operators::Discretization;
    use crate::problem::ProblemSpec;
    use std::f64::consts::PI;

    fn symmetric(n: usize) -> Discretization {
        let g = Geometry::Interval {
            x_lo: 0.0,
            x_hi: 1.0,
            gamma: 0.5,
        };
        Discretization::new(&ProblemSpec::uniform(g, 1.0, 2.0, 1.0, 1.0), n, 0).unwrap()
    }

    #[test]
    fn constant_supersolution_level() {
        let d = symmetric(32);
        let lambda = 2.0 * PI * PI;
        let b = build_bracket(&d, lambda).unwrap();
        assert_eq!(b.kind, SuperKind::Constant);
        assert!((b.k - lambda).abs() < 1e-12 * lambda);
        assert!(is_supersolution(&d, lambda, &b.sup));
        assert!(is_subsolution(&d, lambda, &b.sub));
        let g = b.sub.to_global();
        assert!(g.iter().zip(b.sup.to_global()).all(|(s, t)| *s <= t));
    }

    #[test]
    fn half_lambda_star_is_outside_window() {
        let d = symmetric(32);
        let ls = d.lambda_star().unwrap();
        assert!(matches!(
            build_bracket(&d, 0.5 * ls),
            Err(crate::Error::WindowViolation { .. })
        ));
    }

    #[test]
    fn newton_polishes_monotone_limit() {
        let d = symmetric(32);
        let lambda = 30.0;
        let b = build_bracket(&d, lambda).unwrap();
        let u = monotone_solve(&d, lambda, &b, 1e-8, 20000).unwrap();
        let run = newton_solve(&d, lambda, &u, 1e-12).unwrap();
        assert!(run.iterations <= 3, "{}", run.iterations);
    }
}
