//! Dense complex linear algebra, Bessel functions and fixed-step integrators.
//!
//! Internal units throughout the crate are angular frequency in rad/ns and
//! time in ns. Configuration values quoted as `2π × f` MHz convert with
//! [`mhz`].

mod bessel;
mod linalg;
mod ode;
mod sparse;

use std::f64::consts::PI;

use thiserror::Error;

pub use bessel::{bessel_j, bessel_j_table, BESSEL_MAX_ARG, BESSEL_MAX_ORDER};
pub use linalg::{
    basis_ket, commutator, dagger, expm_hermitian, hermitian_eigen, is_hermitian, is_unitary, kron,
    max_abs, outer, C64, CMatrix, CVector, HERMITIAN_TOL,
};
pub use ode::{rk4_step, OdeState, TimeGrid};
pub use sparse::{DenseHamiltonian, Hamiltonian, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (max |H - H^dagger| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("bessel J_{order}({arg}) outside supported range |n| <= 64, |x| <= 10")]
    BesselOutOfRange { order: i64, arg: f64 },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("eigendecomposition failed to converge")]
    EigenFailed,
}

/// `2π × f[MHz]` in rad/ns.
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f * 1e-3
}

/// `2π × f[kHz]` in rad/ns.
pub fn khz(f: f64) -> f64 {
    2.0 * PI * f * 1e-6
}

/// Inverse of [`mhz`]: rad/ns back to plain MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e-3)
}

/// Inverse of [`khz`].
pub fn to_khz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e-6)
}

/// Wraps an angle into `(-π, π]`.
pub fn canonical_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = theta.rem_euclid(two_pi);
    if a > PI {
        a -= two_pi;
    }
    a
}
