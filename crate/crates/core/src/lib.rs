//! Lithium-ion cell simulation with SEI growth and lithium plating, charging
//! controllers, a TD3 charging agent and a life-cycle benchmark harness.
//!
//! Positive current charges the cell everywhere in this crate.

pub mod cell;
pub mod controllers;
pub mod degradation;
pub mod error;
pub mod grid;
pub mod interp;
pub mod io;
pub mod lifecycle;
pub mod model;
pub mod numerics;
pub mod params;
pub mod pipeline;
pub mod rl;

pub use cell::Cell;
pub use error::{Error, Result};
pub use grid::{build_grid, GridResolution, SpatialGrid};
pub use model::{CellOutputs, CellState};
pub use numerics::{step, StepConfig};
pub use params::CellParameters;
