//! Special Lagrangian operators `F_τ` on the eigenvalues of the Hessian, sampled
//! checks of their structural conditions, and an explicit solver for the
//! parabolic second boundary value problem
//!
//! ```text
//! u_t = F_τ(D²u)  in Ω,    Du(Ω) = Ω̃,
//! ```
//!
//! run until the solution translates at a constant rate `C_∞`.

// Comparisons written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod conditions;
pub mod config;
mod error;
pub mod geometry;
pub mod linalg;
pub mod operator;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::Domain;
pub use linalg::SymMatrix;
pub use operator::{Branch, OperatorTau, SpectralOperator, Spectrum};

/// Crate version, echoed into reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
