//! Solvers for the conformal Einstein-scalar constraint system on a flat
//! periodic 3-torus.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs: grid operators with exact summation-by-parts,
//! coefficient assembly, eigenvalue and constant estimation, the monotone
//! Lichnerowicz solver, the conformal vector Laplacian solve, the coupled
//! fixed-point driver, existence / non-existence criteria and the
//! independent oracles used by the test suite.
//!
//! Sign conventions: `laplacian` is the positive operator `-div grad`, and the
//! vector operator [`grid::conf_laplacian`] is the positive semidefinite
//! `P W = -div(L W)`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod criteria;
pub mod driver;
mod error;
pub mod fmath;
pub mod grid;
pub mod krylov;
pub mod lichnerowicz;
pub mod momentum;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, SymTensorField, TracelessSymField, VectorField};

/// Spatial dimension of the discrete model.
pub const DIM: usize = 3;

/// `c_n = (n-2) / (4(n-1))`.
pub fn conformal_coupling(n: usize) -> f64 {
    let n = n as f64;
    (n - 2.0) / (4.0 * (n - 1.0))
}

/// Critical Sobolev exponent `2n / (n-2)`.
pub fn critical_exponent(n: usize) -> f64 {
    let n = n as f64;
    2.0 * n / (n - 2.0)
}

/// `c_3 = 1/8`.
pub const C_N: f64 = 0.125;
/// `2* = 6` in three dimensions.
pub const TWO_STAR: f64 = 6.0;
