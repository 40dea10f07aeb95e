//! Exact simulation of quantum information scrambling in spin-1/2 chains.
//!
//! The crate builds sparse Hamiltonians for a non-integrable Ising chain and a
//! driven qubit array, prepares the ancilla-entangled protocol states, evolves
//! them with a Lanczos-Krylov propagator, and measures tripartite mutual
//! information, entropies, and thermalization diagnostics along the way.

#[cfg(feature = "lapack")]
extern crate openblas_src as _openblas_src;

pub mod error;
pub mod evolve;
pub mod hilbert;
pub mod linalg;
pub mod observables;
pub mod runner;
pub mod spectra;
pub mod state;

pub use error::{Error, Result};
