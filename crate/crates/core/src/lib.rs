//! Compiler and simulator for programmable anharmonic dynamics of a bosonic
//! mode coupled to a qubit.
//!
//! The pipeline runs potential → Fourier terms → gate program → pulse
//! schedule → evolution → emulated measurement:
//!
//! * [`hilbert`]: truncated Fock-space linear algebra.
//! * [`potential`]: harmonic-plus-Fourier potentials and double-well analysis.
//! * [`compiler`]: trigonometric-gate synthesis and schedule lowering.
//! * [`engine`]: exact, gate-level and dephasing (Lindblad) evolution.
//! * [`tomography`]: characteristic-function scans, Wigner functions and
//!   position estimators.
//! * [`harness`]: configs, error budgets and figure reproduction.

pub mod compiler;
pub mod engine;
pub mod error;
pub mod harness;
pub mod hilbert;
pub mod par;
pub mod potential;
pub mod tomography;

pub use error::{Error, Result};
