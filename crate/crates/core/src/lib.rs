//! Two-dimensional macroscopic traffic simulation with the NEWS model.
//!
//! Traffic on a street network is described by four partial densities
//! (north-, east-, west- and southbound) on a Cartesian grid. Parameters are
//! compiled per intersection, interpolated onto the grid, and the densities
//! are advanced with a donor-cell upwind finite-volume scheme using Godunov
//! demand/supply fluxes, mixing between directions and point sources/sinks.

pub mod config;
pub mod direction;
pub mod error;
pub mod fd;
pub mod gridding;
pub mod network;
pub mod news_params;
pub mod output;
pub mod scenario;
pub mod schedule;
pub mod solver;
pub mod timestep;

pub use config::RunConfig;
pub use direction::{Dir, DirMatrix, PerDir};
pub use error::{BoundTarget, Error, Result};
pub use fd::{FdParams, DEFAULT_GAMMA};
pub use gridding::{CellParams, Grid, GridFields, GridSpec, IoField};
pub use network::StreetNetwork;
pub use scenario::{run_config, run_scheme, Scenario};
pub use schedule::DemandSchedule;
pub use solver::{DensityState, Simulation, SolverOptions};
pub use timestep::{CflConfig, Scheme, StepPlan};
