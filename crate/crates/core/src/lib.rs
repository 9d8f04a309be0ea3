//! Discrete models of electrons coupled to quantized field modes in the
//! length gauge: operator assembly on grid ⊗ Fock product bases, dense and
//! Lanczos eigensolvers, a classical-field mean-field loop, virial/force
//! identity reports with hypervirial cross-checks, density-inversion
//! round trips, and free-space mode summation.

pub mod breakdown;
pub mod error;
pub mod lapack;
pub mod model;
pub mod operators;
pub mod qedft;
pub mod scf;
pub mod solver;
pub mod spec;
pub mod stateio;
pub mod virial;

pub(crate) mod grid;

pub use error::{PfvError, Result};
