//! Model coefficients and the problem description.

use crate::error::{Error, Result};
use crate::mesh::{Geometry, Point, RefugeRegion, Subdomain};

/// Spatially varying coefficient evaluated at mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientField {
    Constant(f64),
    /// `outside` everywhere except at refuge nodes, where it is `inside`.
    PiecewiseOnRefuge { outside: f64, inside: f64 },
    /// Piecewise-linear in `x` through `(xs[k], values[k])`, constant beyond the ends.
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl CoefficientField {
    pub fn eval(&self, p: &Point, in_refuge: bool) -> f64 {
        match self {
            CoefficientField::Constant(c) => *c,
            CoefficientField::PiecewiseOnRefuge { outside, inside } => {
                if in_refuge {
                    *inside
                } else {
                    *outside
                }
            }
            CoefficientField::Tabulated { xs, values } => interpolate(xs, values, p[0]),
        }
    }

    /// Bounds `(min, max)` over every value the field can take.
    pub fn range(&self) -> (f64, f64) {
        match self {
            CoefficientField::Constant(c) => (*c, *c),
            CoefficientField::PiecewiseOnRefuge { outside, inside } => (outside.min(*inside), outside.max(*inside)),
            CoefficientField::Tabulated { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if let CoefficientField::Tabulated { xs, values } = self {
            if xs.is_empty() || xs.len() != values.len() {
                return Err(Error::InvalidSpec(format!(
                    "{name}: tabulated field needs matching non-empty xs/values"
                )));
            }
            if xs.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidSpec(format!("{name}: xs must be strictly increasing")));
            }
        }
        let (lo, hi) = self.range();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidSpec(format!("{name}: coefficient must be finite")));
        }
        Ok(())
    }
}

fn interpolate(xs: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return values[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return values[last];
    }
    let k = xs.partition_point(|&t| t <= x) - 1;
    let s = (x - xs[k]) / (xs[k + 1] - xs[k]);
    values[k] + s * (values[k + 1] - values[k])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub geometry: Geometry,
    pub mu: f64,
    pub p: f64,
    pub m: [CoefficientField; 2],
    pub a: [CoefficientField; 2],
    pub refuges: Vec<RefugeRegion>,
}

impl ProblemSpec {
    /// Constant-coefficient problem without refuges.
    pub fn uniform(geometry: Geometry, mu: f64, p: f64, m: f64, a: f64) -> Self {
        ProblemSpec {
            geometry,
            mu,
            p,
            m: [CoefficientField::Constant(m), CoefficientField::Constant(m)],
            a: [CoefficientField::Constant(a), CoefficientField::Constant(a)],
            refuges: Vec::new(),
        }
    }

    pub fn with_refuges(mut self, refuges: Vec<RefugeRegion>) -> Self {
        self.refuges = refuges;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn m_of(&self, sub: Subdomain) -> &CoefficientField {
        &self.m[sub.index()]
    }

    pub fn a_of(&self, sub: Subdomain) -> &CoefficientField {
        &self.a[sub.index()]
    }

    pub fn is_degenerate(&self) -> bool {
        !self.refuges.is_empty()
    }

    /// Checks the model constraints that do not depend on a mesh.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidSpec(format!("p must exceed 1, got {}", self.p)));
        }
        if self.mu < 0.0 || !self.mu.is_finite() {
            return Err(Error::NegativePermeability(self.mu));
        }
        for sub in Subdomain::BOTH {
            self.m_of(sub).check(&format!("m{sub}"))?;
            self.a_of(sub).check(&format!("a{sub}"))?;
            if !(self.m_of(sub).range().0 > 0.0) {
                return Err(Error::InvalidSpec(format!("m{sub} must be positive")));
            }
            if self.a_of(sub).range().0 < 0.0 {
                return Err(Error::InvalidSpec(format!("a{sub} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Geometry {
        Geometry::Interval {
            x_lo: 0.0,
            x_hi: 1.0,
            gamma: 0.5,
        }
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let f = CoefficientField::Tabulated {
            xs: vec![0.0, 1.0],
            values: vec![1.0, 3.0],
        };
        assert_eq!(f.eval(&[0.25, 0.0], false), 1.5);
        assert_eq!(f.eval(&[-1.0, 0.0], false), 1.0);
        assert_eq!(f.eval(&[2.0, 0.0], false), 3.0);
    }

    #[test]
    fn piecewise_switches_on_refuge() {
        let f = CoefficientField::PiecewiseOnRefuge {
            outside: 2.0,
            inside: 0.0,
        };
        assert_eq!(f.eval(&[0.0, 0.0], true), 0.0);
        assert_eq!(f.eval(&[0.0, 0.0], false), 2.0);
    }

    #[test]
    fn validation_rejects_model_violations() {
        assert!(ProblemSpec::uniform(unit(), 1.0, 2.0, 1.0, 1.0).validate().is_ok());
        let e = ProblemSpec::uniform(unit(), 1.0, 1.0, 1.0, 1.0).validate().unwrap_err();
        assert!(e.to_string().contains("p must exceed 1"));
        assert_eq!(
            ProblemSpec::uniform(unit(), -0.5, 2.0, 1.0, 1.0).validate(),
            Err(Error::NegativePermeability(-0.5))
        );
        assert!(ProblemSpec::uniform(unit(), 1.0, 2.0, 0.0, 1.0).validate().is_err());
        assert!(ProblemSpec::uniform(unit(), 1.0, 2.0, 1.0, -1.0).validate().is_err());
    }
}
