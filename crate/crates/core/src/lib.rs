//! Numerical core for swirl-free axisymmetric incompressible flow written in
//! vorticity form on the meridional half-plane `H = {(r, z) : r > 0}`.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. Everything that
//! touches files, clocks or the command line lives in the `axisym-lab` crate.
//!
//! Module map:
//!
//! * [`grid`]: cell-centred half-plane grid, fields, `r`-weighted quadrature
//!   and discrete gradients.
//! * [`biot_savart`]: velocity reconstruction from vorticity, by an elliptic
//!   stream-function solve and by direct summation of the ring kernel.
//! * [`evolution`]: time stepping of the viscous relative-vorticity equation
//!   and of the conservative vorticity equation.
//! * [`lagrangian`]: particle flows, transport/Jacobian identities,
//!   renormalized weak-form residuals and backward duality.
//! * [`diagnostics`]: norms, impulse, energy, enstrophy and rate fits.
//! * [`inequality`]: empirical constants of weighted functional inequalities.
//! * [`initial`]: initial vorticity fields.
#![cfg_attr(not(test), no_std)]
// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod biot_savart;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod inequality;
pub mod initial;
pub mod interp;
pub mod lagrangian;
pub mod linalg;
pub mod quadrature;
pub mod simulation;
pub mod special;
mod transform;

pub use error::{Error, Result};
pub use grid::{AxisParity, FieldRole, HalfPlaneGrid, ScalarField, VelocityField};

/// `2π`, the angular factor that turns half-plane integrals against `r d(r,z)`
/// into integrals over `R³`.
pub const TWO_PI: f64 = 2.0 * core::f64::consts::PI;
