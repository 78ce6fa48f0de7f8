//! Per-subdomain discrete states.

use crate::error::{Error, Result};
use crate::mesh::{MembraneMesh, Subdomain};

/// A discrete state `(u1, u2)`; each component lives on its own subdomain's nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldPair {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl FieldPair {
    pub fn zeros(mesh: &MembraneMesh) -> Self {
        let [n1, n2] = mesh.node_counts();
        FieldPair {
            u1: vec![0.0; n1],
            u2: vec![0.0; n2],
        }
    }

    /// Splits a global vector (subdomain one first) into components.
    pub fn from_global(mesh: &MembraneMesh, global: &[f64]) -> Result<Self> {
        let [n1, n2] = mesh.node_counts();
        if global.len() != n1 + n2 {
            return Err(Error::DimensionMismatch {
                expected: n1 + n2,
                found: global.len(),
            });
        }
        Ok(FieldPair {
            u1: global[..n1].to_vec(),
            u2: global[n1..].to_vec(),
        })
    }

    pub fn to_global(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.u1.len() + self.u2.len());
        g.extend_from_slice(&self.u1);
        g.extend_from_slice(&self.u2);
        g
    }

    pub fn component(&self, sub: Subdomain) -> &[f64] {
        match sub {
            Subdomain::One => &self.u1,
            Subdomain::Two => &self.u2,
        }
    }

    pub fn check_shape(&self, mesh: &MembraneMesh) -> Result<()> {
        let [n1, n2] = mesh.node_counts();
        for (expected, found) in [(n1, self.u1.len()), (n2, self.u2.len())] {
            if expected != found {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.u1.iter().chain(&self.u2).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.u1.iter().chain(&self.u2).fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn scaled(&self, s: f64) -> Self {
        FieldPair {
            u1: self.u1.iter().map(|v| v * s).collect(),
            u2: self.u2.iter().map(|v| v * s).collect(),
        }
    }
}
