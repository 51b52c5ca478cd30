//! Minimum-residual finite elements for semilinear elliptic problems
//! `-div(kappa grad u + rho(u) beta) + gamma(u) = f` in two dimensions.
//!
//! The linear part is discretised by a primal DPG method with broken test
//! functions; the nonlinear relations `q = rho(u)`, `r = gamma(u)` enter as
//! L2 least-squares terms. The discrete functional is minimised by Newton's
//! method and its element contributions drive adaptive newest-vertex
//! bisection.

pub mod adaptivity;
pub mod dpg;
pub mod error;
pub mod fespace;
pub mod linsolve;
pub mod mesh;
pub mod problems;
pub mod runner;
pub mod semilinear;

pub use error::{Error, Result};
