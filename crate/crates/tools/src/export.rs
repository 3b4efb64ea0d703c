//! Trajectory and metrics text output.
//!
//! Trajectory files are comma-separated, UTF-8, LF-terminated. Lines
//! starting with `#` are comments; the first one carries the scenario name,
//! `xi` and horizon. The column header follows:
//!
//! ```text
//! index,q1,q2,q3,q4,q5,q6,tool_x,tool_y,tool_z,tcp_error,min_distance,inner_iterations
//! ```
//!
//! Angles are radians, lengths meters, all reals with 12 significant digits.
//! Timing never appears in the trajectory file, so repeated runs are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use icop::{JointConfig, MetricsReport, Trajectory, DOF};
use nalgebra::Point3;
use thiserror::Error;

pub const TRAJECTORY_COLUMNS: &str =
    "index,q1,q2,q3,q4,q5,q6,tool_x,tool_y,tool_z,tcp_error,min_distance,inner_iterations";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One data row read back from a trajectory file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub q: JointConfig,
    pub tool: Point3<f64>,
    pub tcp_error: f64,
    pub min_distance: f64,
    pub inner_iterations: usize,
}

fn real(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn render_trajectory(traj: &Trajectory, scenario: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# scenario={scenario} xi={:e} horizon={}",
        traj.xi,
        traj.len()
    );
    out.push_str(TRAJECTORY_COLUMNS);
    out.push('\n');
    for (i, (q, step)) in traj.states.iter().zip(&traj.steps).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(q.iter().map(|v| real(*v)));
        row.extend(step.tool_position.iter().map(|v| real(*v)));
        row.push(real(step.tcp_error));
        row.push(real(step.min_distance));
        row.push(step.inner_iterations.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), ExportError> {
    fs::write(path, text).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn export_trajectory(
    traj: &Trajectory,
    scenario: &str,
    path: &Path,
) -> Result<(), ExportError> {
    write_file(path, &render_trajectory(traj, scenario))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>, ExportError> {
    let text = fs::read_to_string(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, message: String| ExportError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut seen_header = false;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != TRAJECTORY_COLUMNS {
                return Err(bad(line_no, format!("unexpected column header {line:?}")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(bad(
                line_no,
                format!("expected 13 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64, ExportError> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| bad(line_no, format!("field {}: {e}", i + 1)))
        };
        let int = |i: usize| -> Result<usize, ExportError> {
            fields[i]
                .parse::<usize>()
                .map_err(|e| bad(line_no, format!("field {}: {e}", i + 1)))
        };
        let mut q = JointConfig::zeros();
        for j in 0..DOF {
            q[j] = num(1 + j)?;
        }
        records.push(TrajectoryRecord {
            index: int(0)?,
            q,
            tool: Point3::new(num(7)?, num(8)?, num(9)?),
            tcp_error: num(10)?,
            min_distance: num(11)?,
            inner_iterations: int(12)?,
        });
    }
    if !seen_header {
        return Err(bad(0, "missing column header".to_string()));
    }
    Ok(records)
}

/// Key-value report; `seed` and the scenario name are echoed for provenance.
pub fn render_metrics(m: &MetricsReport, scenario: &str, seed: u64) -> String {
    let iters: Vec<String> = m
        .per_step_inner_iters
        .iter()
        .map(|i| i.to_string())
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {scenario}");
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "horizon = {}", m.horizon);
    let _ = writeln!(out, "xi = {:e}", m.xi);
    let _ = writeln!(out, "mean_tcp_error_m = {}", real(m.mean_tcp_error));
    let _ = writeln!(out, "max_tcp_error_m = {}", real(m.max_tcp_error));
    let _ = writeln!(out, "mean_safe_distance_m = {}", real(m.mean_safe_distance));
    let _ = writeln!(out, "min_safe_distance_m = {}", real(m.min_safe_distance));
    let _ = writeln!(out, "computation_time_s = {:.6}", m.total_time);
    let _ = writeln!(out, "total_inner_iters = {}", m.total_inner_iters);
    let _ = writeln!(out, "per_step_inner_iters = {}", iters.join(","));
    out
}

pub fn export_metrics(
    m: &MetricsReport,
    scenario: &str,
    seed: u64,
    path: &Path,
) -> Result<(), ExportError> {
    write_file(path, &render_metrics(m, scenario, seed))
}
