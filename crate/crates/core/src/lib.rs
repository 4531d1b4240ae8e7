//! Spectral Galerkin solver for `(-Δ)^s u = λ f(u)` on the unit ball, with the cylinder
//! extension, regularity diagnostics and experiment persistence.
//!
//! The special functions and quadrature rules are generic over [`scalar::Scalar`]; the
//! aliases below fix them to `f64`, the precision the solver runs in.

// Coefficient tables keep their published digits; `!(x > 0.0)` is used on purpose to catch NaN.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod scalar;
pub mod specfun;
pub mod quad;
pub mod spectral;
pub mod extension;
pub mod nonlinearity;
pub mod branch;
pub mod regularity;
pub mod persist;

pub use branch::{Branch, BranchPoint, Solver, SolverOptions, TraceOptions};
pub use error::{Error, Result};
pub use extension::ExtensionField;
pub use nonlinearity::Nonlinearity;
pub use persist::{ExperimentConfig, ZeroCache};
pub use spectral::{BallBasis, RadialCoeffs};

pub type BesselOrder = specfun::BesselOrder<f64>;
pub type GaussLegendre = quad::GaussLegendre<f64>;
