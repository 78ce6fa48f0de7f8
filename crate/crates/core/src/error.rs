use crate::mesh::Subdomain;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("mesh too coarse: {what} = {value}, need at least 2")]
    TooCoarse { what: &'static str, value: usize },

    #[error("refuge box {lo:?}..{hi:?} in subdomain {subdomain} touches an interface or outer boundary")]
    RefugeTouchesBoundary {
        subdomain: Subdomain,
        lo: [f64; 2],
        hi: [f64; 2],
    },

    #[error("refuge in subdomain {0} is empty or missing")]
    EmptyRefuge(Subdomain),

    #[error("subdomain {0} already carries a refuge")]
    DuplicateRefuge(Subdomain),

    #[error("membrane permeability must be non-negative, got {0}")]
    NegativePermeability(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("singular operator: pivot {pivot:e} at row {index}")]
    SingularOperator { index: usize, pivot: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("weight must be positive, found {value} at dof {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("no sign change of the principal eigenvalue in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("shifted operator is not positive definite ({negative_pivots} negative pivots)")]
    ShiftTooSmall { negative_pivots: usize },

    #[error("lambda = {lambda} lies outside the admissible window ({lower}, {upper})")]
    WindowViolation { lambda: f64, lower: f64, upper: f64 },

    #[error("no refuge neighbourhood gives a positive principal eigenvalue for subdomain {0}")]
    PatchFailure(Subdomain),

    #[error("monotone iterate left the bracket at iteration {iteration} (dof {index}, excess {excess:e})")]
    NotContracting {
        iteration: usize,
        index: usize,
        excess: f64,
    },

    #[error("iteration limit {iterations} reached (residual {residual:e})")]
    MaxIters { iterations: usize, residual: f64 },

    #[error("singular Jacobian: pivot {pivot:e} at row {index}")]
    SingularJacobian { index: usize, pivot: f64 },

    #[error("ramp solutions still differ by {difference:e} on the compact (tolerance {tolerance:e})")]
    NotStagnating { difference: f64, tolerance: f64 },

    #[error("principal eigenvalue not decreasing: sigma({lo}) = {sigma_lo}, sigma({hi}) = {sigma_hi}")]
    NonMonotone {
        lo: f64,
        hi: f64,
        sigma_lo: f64,
        sigma_hi: f64,
    },

    #[error("no subsolution found: inequality still violated at epsilon = {epsilon:e}")]
    SubsolutionFailure { epsilon: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}
