//! Lagrangian systems with linear nonholonomic constraints.
//!
//! The crate evaluates the constrained dynamics by projecting the
//! unconstrained Euler-Lagrange field along fibre-normal directions, builds
//! adapted frames on the constraint submanifold, and checks candidate
//! symmetries and first integrals by sampled residuals.
//!
//! Every quantity is computed pointwise at a [`TangentState`]; expressions
//! are differentiated symbolically, so residuals are limited by rounding and
//! not by finite differences.

pub mod conservation;
pub mod constraint;
pub mod dynamics;
mod error;
pub mod expr;
pub mod geometry;
pub mod lagrangian;
pub(crate) mod linalg;
pub mod scenarios;

pub use constraint::{AdaptedFrame, ConstrainedSystem};
pub use dynamics::{DynamicsSample, Trajectory};

pub use error::{Error, ErrorClass, Result};
pub use expr::{Expr, SymbolTable};
pub use geometry::{DomainBox, TangentState, VectorField};
pub use lagrangian::Lagrangian;
pub use scenarios::Scenario;

pub use nalgebra::{DMatrix, DVector};
