//! Stopping particles of unknown velocity by reflection from a wall that
//! moves as `sqrt(t)`.
//!
//! * [`protocol`]: mirror trajectory, unit scaling and protocol design.
//! * [`classical_map`]: exact single-particle phase-space map and its inverse.
//! * [`ensemble`]: transport of a truncated-Gaussian phase-space density.
//! * [`quantum`]: 1-D wave-packet propagation with the moving wall.
//! * [`config`] and [`runner`]: config-driven runs that emit CSV.

pub mod classical_map;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod protocol;
pub mod quantum;
pub mod runner;

pub use classical_map::{
    dnu_f_dchi_s, dnu_f_dnu_s, eta, forward_map, has_collision, inverse_map, lambda_inv,
    trajectory_oracle, MapResult, OracleResult,
};
pub use error::{CatcherError, Result};
pub use protocol::{design_protocol, Design, DesignSearch, DesignStep, PhaseSpacePoint, StoppingProtocol};
