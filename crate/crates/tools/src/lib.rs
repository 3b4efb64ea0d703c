//! File formats and command-line plumbing around the `icop` planner.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod export;
pub mod scenario;

pub use cli::{
    cmd_plan, cmd_sweep_horizon, cmd_sweep_xi, prepare, CliError, MonotonicClock, RunConfig,
};
pub use export::{export_trajectory, read_trajectory, render_trajectory, TrajectoryRecord};
pub use scenario::{load_scenario, parse_scenario, serialize, Mounting, Scenario, ScenarioError};
