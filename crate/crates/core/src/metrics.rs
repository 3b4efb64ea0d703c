//! Summary statistics over a planned trajectory.

use alloc::vec::Vec;

use crate::planner::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Mean distance between tool tip and target, meters.
    pub mean_tcp_error: f64,
    pub max_tcp_error: f64,
    /// Mean of the per-step minimum clearance, meters.
    pub mean_safe_distance: f64,
    pub min_safe_distance: f64,
    /// Wall-clock seconds spent in the planner.
    pub total_time: f64,
    pub per_step_inner_iters: Vec<usize>,
    pub total_inner_iters: usize,
    pub horizon: usize,
    pub xi: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn compute_metrics(traj: &Trajectory) -> MetricsReport {
    let steps = &traj.steps;
    let per_step_inner_iters: Vec<usize> = steps.iter().map(|s| s.inner_iterations).collect();
    MetricsReport {
        mean_tcp_error: mean(steps.iter().map(|s| s.tcp_error)),
        max_tcp_error: steps.iter().map(|s| s.tcp_error).fold(0.0, f64::max),
        mean_safe_distance: mean(steps.iter().map(|s| s.min_distance)),
        min_safe_distance: steps
            .iter()
            .map(|s| s.min_distance)
            .fold(f64::INFINITY, f64::min),
        total_time: traj.total_time,
        total_inner_iters: per_step_inner_iters.iter().sum(),
        per_step_inner_iters,
        horizon: steps.len(),
        xi: traj.xi,
    }
}
