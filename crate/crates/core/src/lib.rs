//! Collective optical response of sub-wavelength two-dimensional atom arrays.
//!
//! The crate simulates a weak coherent probe pulse scattering off a square
//! lattice of atoms with resonant dipole-dipole couplings, using
//! stochastic-wavefunction (quantum jump) trajectories. Besides bare two-level
//! atoms it handles a four-level ladder in which a classical drive and a
//! microwave cavity mode couple the excited state to two Rydberg levels, so
//! the array can be switched between transparent and reflective.
//!
//! Module overview:
//!
//! * [`geometry`]: lattice construction and static position disorder.
//! * [`kernel`]: free-space Green's tensor, coupling matrices and collective
//!   decay channels.
//! * [`modes`]: Gaussian beam, pulse envelope and Rabi-frequency profiles.
//! * [`dynamics`]: amplitude equations, adaptive integration, quantum jumps.
//! * [`observables`]: transmitted/reflected fields, probabilities and
//!   ensemble statistics.
//! * [`runner`]: run configuration, presets, sweeps and result emission.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod modes;
pub mod observables;
pub mod runner;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// 2π × 1 MHz in rad/s.
pub const MHZ: f64 = 2.0 * std::f64::consts::PI * 1.0e6;
