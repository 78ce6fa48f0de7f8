//! Discretization and solvers for two logistic populations coupled through
//! a permeable membrane.

pub mod error;
pub mod exec;
pub mod fields;
pub mod limits;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod problem;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use exec::Execution;
pub use fields::FieldPair;
pub use mesh::{AxisBox, Geometry, MembraneMesh, RefugeRegion, Subdomain};
pub use operators::{Discretization, MassKind};
pub use problem::{CoefficientField, ProblemSpec};
