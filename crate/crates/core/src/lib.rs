//! Stationary states and long-time behaviour of a two-species
//! Poisson-Nernst-Planck system with steric cross-diffusion.
//!
//! The stationary problem is reduced to pointwise algebraic equations for
//! the densities coupled with a semilinear Neumann-Poisson equation for the
//! potential. The modules follow that reduction:
//!
//! - [`params`]: coefficients and hypothesis checks,
//! - [`algebra`]: the algebraic system on the unique-branch side,
//! - [`trichotomy`]: fold analysis and branch enumeration otherwise,
//! - [`elliptic`]: energy minimization for the reduced Poisson problem,
//! - [`evolution`]: the time-dependent system and its relative entropy.

pub mod algebra;
pub mod elliptic;
pub mod error;
pub mod evolution;
mod interp;
pub mod output;
pub mod params;
mod roots;
pub mod trichotomy;

pub use algebra::{AlgebraicPoint, Branch, NonlinearityTable};
pub use error::{Error, Result};
pub use params::{HypothesisReport, ModelParams};
