//! Linear Caputo-fractional evolution equations with impulsive jumps on
//! finite-dimensional state spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`specfun`]: Gamma, Mittag-Leffler and Wright functions, scalar and matrix.
//! - [`sysmodel`]: system specification, control bundles, config files.
//! - [`solops`]: solution operators `S_α`, `P_α` and singular convolutions.
//! - [`propagator`]: forward mild solutions, adjoint solutions, Green residual.
//! - [`gramian`]: controllability operator, its adjoint and the Gramian blocks.
//! - [`controllability`]: regularized steering and controllability certificates.
//!
//! All verdicts produced here concern the finite-dimensional model that was
//! supplied (for PDE examples, a spectral truncation), never the underlying
//! infinite-dimensional system.

pub mod controllability;
pub mod error;
pub mod gramian;
pub mod linalg;
pub mod propagator;
pub mod quadrature;
pub mod solops;
pub mod specfun;
pub mod sysmodel;

pub use error::{Error, Result};
