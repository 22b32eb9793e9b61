//! Adaptive stabilization of a scalar plant with unknown growth rate using
//! the delayed histories of its state and input.

// Negated comparisons send NaN into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod experiment;
pub mod history;
pub mod identifier;
pub mod sim;
pub mod verify;

pub use control::{ControlError, ControllerConfig};
pub use history::{HistoryWindow, WindowError};
pub use identifier::{IdentifierError, IdentifierState};
pub use sim::{run, DisturbanceSpec, PlantParams, Scenario, SimError, SimulationTrace};
