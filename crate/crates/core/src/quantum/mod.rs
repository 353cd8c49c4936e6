//! One-dimensional wave packet reflected by the moving wall.

pub mod grid;
pub mod observables;
pub mod potential;
mod reservoir;
pub mod simulation;
pub mod solver;
pub mod wavepacket;

pub use grid::GridState;
pub use observables::{observables, observables_with, velocity_density, Observables, VelocityDensity};
pub use potential::{potential, WallKind, WallSpec};
pub use simulation::{run_quantum, QuantumNumerics, QuantumRun, QuantumSetup, Snapshot};
pub use solver::{de_broglie_wavelength, propagate, Propagator, SolverOptions, TimeOrder};
pub use wavepacket::{build_initial_wavefunction, WavepacketSpec, HBAR, RUBIDIUM_MASS};
