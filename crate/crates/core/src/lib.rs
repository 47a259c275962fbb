//! Two-photon vibrational control in a soft-core H2+ model.
//!
//! The crate has two engines that share pulse definitions: a 2D
//! time-dependent Schrödinger solver on an `(R, x)` grid and a reduced model that
//! couples a few vibrational levels through `E^2(t)`.

pub mod config;
pub mod eigensolver;
pub mod io;
pub mod error;
pub mod experiments;
pub mod model;
pub mod propagator;
pub mod pulses;
pub mod tridiag;
pub mod twolevel;
pub mod validation;

pub use error::{Error, Result};
pub use model::{apply_hamiltonian, build_potential, Grid2D, GridPreset, GridSpec, ModelParams, PotentialField, Wavefunction2D};
pub use pulses::{focal_samples, intensity_to_field, make_train, wavelength_to_omega, BeamProfile, PhaseLock, PulseSpec, TrainSpec};
