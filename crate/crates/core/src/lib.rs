//! Solver library for the Cahn-Hilliard equation with logarithmic potential and
//! singular gradient coefficient `a(u) = 2/(1-u^2)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`], [`ops`]: cell-centered Neumann grids, stencils, elliptic solves.
//! - [`model`]: constitutive functions, their truncated versions, and the three
//!   equivalent chemical-potential evaluators.
//! - [`regularize`]: smoothing and separation of initial data.
//! - [`stepper`]: implicit time integration with exact mass conservation.
//! - [`diagnostics`]: energy, dissipation, separation and entropy monitors.
//! - [`verification`]: independent oracles for the above.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod ops;
pub mod regularize;
pub mod stepper;
pub mod transform;
pub mod verification;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use model::ModelParams;
