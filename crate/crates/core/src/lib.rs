//! Simulation library for a minimal autonomous quantum-detector model.
//!
//! The detector is a 24-dimensional open quantum system: a two-qubit thermal
//! machine (cold and hot qubit), a three-level gain medium, and the two-level
//! target system, evolving under a GKLS master equation. The library builds
//! the model Hamiltonians and jump operators ([`model`]), vectorizes the
//! master equation into a 576x576 Liouvillian and computes its biorthogonal
//! spectral decomposition, steady state, and Drazin pseudo-inverse
//! ([`liouville`]), evaluates the detector's figures of merit and entropy
//! production in closed form ([`metrics`]), provides time-domain propagation
//! and quadrature oracles ([`dynamics`]), and runs reproducible parameter
//! sweeps with trade-off fits ([`sweep`]).

pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod liouville;
pub mod metrics;
pub mod model;
pub mod sweep;

pub use error::{Error, Result};

/// Complex scalar used throughout: all spectral machinery is double precision.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = ndarray::Array2<C64>;

/// Dense complex vector.
pub type CVector = ndarray::Array1<C64>;
