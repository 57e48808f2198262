//! Ground truth independent of the SOS pipeline: grid value iteration for the Bellman
//! equation and a simulation estimate of the maximal robust region of attraction.

mod grid;
mod sim;
mod vi;

pub use grid::{Axis, CsvCell, GridField};
pub use sim::{compare_upper, grid_max_roa, hitting_time, SimSettings, UpperReport};
pub use vi::{bellman_residual, lower_branch, state_axes, value_iteration, BellmanResidual, Interpolator, ViResult, ViSettings};
