//! Lattice engine for perturbative agreement of the charged Dirac field
//! on 1+1D cylinder backgrounds with U(1) or SU(2) gauge fields.

pub mod background;
pub mod checks;
pub mod cli;
pub mod dirac;
pub mod error;
pub mod exec;
pub mod funcalg;
pub mod lattice;
pub mod moller;
pub mod oracle;
pub mod ppa;
pub mod states;
pub mod tproducts;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);
