//! Two-level atoms coupled to the band edge of a photonic-crystal waveguide.
//!
//! Atoms sit on the sites of a one-dimensional lattice and exchange
//! excitations through a short-ranged bandgap interaction and a lossy
//! propagating mode. The crate computes weak-drive transmission spectra and
//! photon correlations, driven-dissipative population dynamics, reduced
//! models for the collective resonance, and disorder-averaged statistics.

pub mod basis;
pub mod effective;
pub mod ensemble;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod lattice;
pub mod master;
pub mod params;
pub mod propagate;
pub mod sparse;
pub mod weak_drive;

pub use basis::{enumerate_basis, ExcitationBasis, StateVector};
pub use error::{Error, Result};
pub use master::{PopulationTrajectory, Surface};
pub use lattice::{sample_configuration, sample_poisson, AtomicConfiguration};
pub use params::{ModelParams, Range};
pub use weak_drive::{Direction, Spectrum};
