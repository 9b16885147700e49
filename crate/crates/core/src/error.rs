use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coefficient `{name}` = {value} violates its sign convention ({expected})")]
    SignViolation {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("domain length must be positive, got {0}")]
    NonpositiveLength(f64),
    #[error("no sign change found while bracketing {what}")]
    BracketFailure { what: &'static str },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(&'static str),
    #[error("densities must be positive, got u = {u}, v = {v}")]
    NonpositiveDensity { u: f64, v: f64 },
    #[error("derivative denominator vanishes at u = {u}, v = {v}")]
    SingularDenominator { u: f64, v: f64 },
    #[error("leading cubic coefficient is zero")]
    DegenerateCubic,
    #[error("wrong regime: {0}")]
    WrongRegime(&'static str),
    #[error("u = {u} lies outside the admissible domain u > {u_star}")]
    DomainViolation { u: f64, u_star: f64 },
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("branch {branch} is not available at node {node} for phi = {phi}")]
    BranchUnavailable {
        node: usize,
        phi: f64,
        branch: &'static str,
    },
    #[error("phi = {0} is outside the extendable nonlinearity table range")]
    RangeExceeded(f64),
    #[error("electroneutrality violated: net charge {net:.3e} (scale {scale:.3e})")]
    CompatibilityViolation { net: f64, scale: f64 },
    #[error("time step {dt:.3e} exceeds the stability bound {bound:.3e}")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error("negative density {value:.3e} at node {node}")]
    NegativityBreach { node: usize, value: f64 },
    #[error("total mass must be positive")]
    ZeroMass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
