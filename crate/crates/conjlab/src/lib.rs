//! Numerical laboratory for conjugate points along (perturbed) semi-Riemannian
//! geodesics in R^3, and for deciding which conjugate points are bifurcation
//! points.
//!
//! The workhorse objects are mechanical systems (flat diagonal +/-1 metric plus
//! a potential) and conformally flat metrics `exp(2*rho) * g0`. On top of an
//! adaptive Runge-Kutta integrator with dense output the crate provides
//!
//! * exact symbolic fields for the closed class of potentials in use
//!   ([`fields`]),
//! * Christoffel symbols, curvature and Jacobi-equation coefficients
//!   ([`geometry`]),
//! * trajectory integration, energies, residual checks and the
//!   Maupertuis-style correspondence between the two system kinds
//!   ([`dynamics`]),
//! * linearized flows and conjugate-point detection ([`variational`]),
//! * miss-map shooting, branch tracing and positivity certificates
//!   ([`bifurcation`]),
//! * a scenario registry and deterministic JSON/CSV reporting
//!   ([`scenario`], [`report`]).

// index-style loops mirror the tensor formulas throughout
#![allow(clippy::needless_range_loop)]

pub mod bifurcation;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod integrate;
pub mod report;
pub mod scenario;
pub mod variational;

pub use error::{Error, Result};
pub use fields::{Axis, Poly3, ScalarField};
pub use geometry::{ConformalMetric, MechanicalSystem, Signature, System};

/// Version string embedded in reports and the C API.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
