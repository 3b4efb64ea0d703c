//! Library side of the `icop` binary: every command is a plain function so
//! tests can drive it without spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use icop::path::resample;
use icop::{compute_metrics, plan_with_clock, Clock, MetricsReport, PlanError, Trajectory};
use nalgebra::Point3;
use thiserror::Error;

use crate::export::{export_metrics, export_trajectory, ExportError};
use crate::scenario::{load_scenario, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NON_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub output_dir: PathBuf,
    pub xi: Option<f64>,
    pub horizon: Option<usize>,
    pub rounds: Option<usize>,
    pub per_capsule_rows: Option<bool>,
    /// Recorded in reports; planning itself is deterministic.
    pub seed: u64,
    /// Sweep rows report the fastest of this many timed runs.
    pub repeats: usize,
}

impl RunConfig {
    pub fn new(scenario_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenario_path: scenario_path.into(),
            output_dir: output_dir.into(),
            xi: None,
            horizon: None,
            rounds: None,
            per_capsule_rows: None,
            seed: 0,
            repeats: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid override: {0}")]
    Override(String),
    #[error("{0}")]
    Plan(PlanError),
    #[error("trajectory violates constraints:\n  {}", .0.join("\n  "))]
    Violations(Vec<String>),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            // A missing scenario file counts as a parse failure.
            CliError::Scenario(_) | CliError::Override(_) => EXIT_PARSE,
            CliError::Plan(_) | CliError::Violations(_) => EXIT_NON_CONVERGED,
            CliError::Export(_) | CliError::Io { .. } => EXIT_IO,
        }
    }

    /// Single `key=value` line for scripts.
    pub fn summary(&self) -> String {
        match self {
            CliError::Plan(PlanError::NonConverged {
                waypoint,
                iterations,
                residual,
                distance,
                qp_status,
            }) => format!(
                "status=non_converged waypoint={waypoint} iterations={iterations} residual={residual:e} \
                 distance={distance:e} qp={}",
                qp_status.map_or("none".to_string(), |s| format!("{s:?}").to_lowercase())
            ),
            CliError::Plan(e) => format!("status=plan_error detail={:?}", e.to_string()),
            CliError::Violations(v) => format!("status=violations count={}", v.len()),
            CliError::Scenario(_) | CliError::Override(_) => format!("status=parse_error detail={:?}", self.to_string()),
            CliError::Export(_) | CliError::Io { .. } => format!("status=io_error detail={:?}", self.to_string()),
        }
    }
}

/// Wall clock for timing `plan`.
pub struct MonotonicClock(Instant);

impl MonotonicClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// A loaded scenario with overrides applied and the workpiece mounted.
pub struct Prepared {
    pub scenario: Scenario,
    pub scene: icop::Scene,
    pub path: Vec<Point3<f64>>,
}

impl Prepared {
    pub fn plan(&self) -> Result<Trajectory, PlanError> {
        let s = &self.scenario;
        plan_with_clock(
            &self.path,
            &s.initial_config,
            &s.chain,
            &s.capsules,
            &self.scene,
            &s.params,
            &MonotonicClock::new(),
        )
    }

    /// Same scenario, weld path resampled to `horizon` waypoints.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self, CliError> {
        if horizon == 0 {
            return Err(CliError::Override("horizon must be at least 1".to_string()));
        }
        Ok(Self {
            scenario: self.scenario.clone(),
            scene: self.scene.clone(),
            path: resample(&self.scenario.mounted_weld_path(), horizon),
        })
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self, CliError> {
        let mut scenario = self.scenario.clone();
        scenario.params.xi = xi;
        scenario
            .params
            .validate()
            .map_err(|e| CliError::Override(e.to_string()))?;
        Ok(Self {
            scenario,
            scene: self.scene.clone(),
            path: self.path.clone(),
        })
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let mut scenario = load_scenario(&config.scenario_path)?;
    if let Some(xi) = config.xi {
        scenario.params.xi = xi;
    }
    if let Some(rounds) = config.rounds {
        scenario.params.rounds = rounds;
    }
    if let Some(p) = config.per_capsule_rows {
        scenario.params.per_capsule_rows = p;
    }
    scenario
        .params
        .validate()
        .map_err(|e| CliError::Override(e.to_string()))?;
    if config.repeats == 0 {
        return Err(CliError::Override("repeats must be at least 1".to_string()));
    }
    let scene = scenario.mounted_scene();
    let mut path = scenario.mounted_weld_path();
    if let Some(h) = config.horizon {
        if h == 0 {
            return Err(CliError::Override("horizon must be at least 1".to_string()));
        }
        path = resample(&path, h);
    }
    Ok(Prepared {
        scenario,
        scene,
        path,
    })
}

/// Every way a planned trajectory can break the three constraints.
pub fn check_trajectory(prepared: &Prepared, traj: &Trajectory) -> Vec<String> {
    let params = &prepared.scenario.params;
    let mut out = Vec::new();
    for (t, (q, step)) in traj.states.iter().zip(&traj.steps).enumerate() {
        if !(step.tcp_error <= params.xi) {
            out.push(format!(
                "step {t}: tcp_error {:e} > xi {:e}",
                step.tcp_error, params.xi
            ));
        }
        if !(step.min_distance > 0.0) {
            out.push(format!(
                "step {t}: min_distance {:e} <= 0",
                step.min_distance
            ));
        }
        if !params.within_limits(q) {
            out.push(format!("step {t}: joint limits violated"));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct PlanReport {
    pub trajectory: Trajectory,
    pub metrics: MetricsReport,
    pub trajectory_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn trajectory_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(format!("{name}.trajectory.csv"))
}

pub fn metrics_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(format!("{name}.metrics.txt"))
}

pub fn cmd_plan(config: &RunConfig) -> Result<PlanReport, CliError> {
    let prepared = prepare(config)?;
    let name = prepared.scenario.name.clone();
    let result = prepared.plan();
    create_dir(&config.output_dir)?;
    let failure_path = config.output_dir.join(format!("{name}.failure.txt"));
    let traj = match result {
        Ok(t) => t,
        Err(e) => {
            let err = CliError::Plan(e);
            write_text(&failure_path, &format!("{}\n", err.summary()))?;
            return Err(err);
        }
    };
    let metrics = compute_metrics(&traj);
    let trajectory_path = trajectory_path(config, &name);
    let metrics_path = metrics_path(config, &name);
    export_trajectory(&traj, &name, &trajectory_path)?;
    export_metrics(&metrics, &name, config.seed, &metrics_path)?;
    let violations = check_trajectory(&prepared, &traj);
    if !violations.is_empty() {
        let err = CliError::Violations(violations);
        write_text(&failure_path, &format!("{}\n", err.summary()))?;
        return Err(err);
    }
    log::info!(
        "{name}: horizon {} mean tcp {:.3e} m, mean clearance {:.4} m, {} inner iterations, {:.3} s",
        metrics.horizon,
        metrics.mean_tcp_error,
        metrics.mean_safe_distance,
        metrics.total_inner_iters,
        metrics.total_time
    );
    Ok(PlanReport {
        trajectory: traj,
        metrics,
        trajectory_path,
        metrics_path,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Horizon or `xi`, depending on the sweep.
    pub key: f64,
    pub horizon: usize,
    /// Fastest of the timed repetitions, seconds.
    pub time: f64,
    pub total_inner_iters: Option<usize>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub key_name: &'static str,
    pub rows: Vec<SweepRow>,
    pub path: PathBuf,
}

fn run_row(prepared: &Prepared, key: f64, repeats: usize) -> SweepRow {
    let mut time = f64::INFINITY;
    let mut outcome = None;
    for _ in 0..repeats {
        let r = prepared.plan();
        if let Ok(t) = &r {
            time = time.min(t.total_time);
        }
        let failed = r.is_err();
        outcome = Some(r);
        if failed {
            break;
        }
    }
    let horizon = prepared.path.len();
    match outcome.expect("at least one repetition") {
        Ok(traj) => {
            let violations = check_trajectory(prepared, &traj);
            SweepRow {
                key,
                horizon,
                time,
                total_inner_iters: Some(compute_metrics(&traj).total_inner_iters),
                status: if violations.is_empty() {
                    "ok".to_string()
                } else {
                    format!("violations:{}", violations.len())
                },
            }
        }
        Err(e) => SweepRow {
            key,
            horizon,
            time: f64::NAN,
            total_inner_iters: None,
            status: match e {
                PlanError::NonConverged { waypoint, .. } => format!("non_converged@{waypoint}"),
                other => format!("error:{:?}", other.to_string()),
            },
        },
    }
}

/// First `model name` line of `/proc/cpuinfo`, if there is one.
pub fn cpu_model() -> String {
    fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".to_string())
}

fn render_sweep(table: &SweepTable, prepared: &Prepared, config: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# cpu={}", cpu_model());
    let _ = writeln!(
        out,
        "# scenario={} xi={:e} repeats={} seed={}",
        prepared.scenario.name, prepared.scenario.params.xi, config.repeats, config.seed
    );
    let by_xi = table.key_name == "xi";
    if by_xi {
        out.push_str("xi,horizon,time_s,total_inner_iters,status\n");
    } else {
        out.push_str("horizon,time_s,total_inner_iters,status\n");
    }
    for r in &table.rows {
        let iters = r
            .total_inner_iters
            .map_or("-".to_string(), |i| i.to_string());
        if by_xi {
            let _ = write!(out, "{:e},", r.key);
        }
        let _ = writeln!(out, "{},{:.6},{iters},{}", r.horizon, r.time, r.status);
    }
    out
}

/// Plans once per horizon, the weld path resampled each time.
pub fn cmd_sweep_horizon(config: &RunConfig, horizons: &[usize]) -> Result<SweepTable, CliError> {
    let base = prepare(config)?;
    let mut rows = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let prepared = base.with_horizon(h)?;
        let row = run_row(&prepared, h as f64, config.repeats);
        log::info!("horizon {h}: {} in {:.4} s", row.status, row.time);
        rows.push(row);
    }
    finish_sweep(config, &base, "horizon", rows)
}

/// Plans once per `xi` at the configured horizon.
pub fn cmd_sweep_xi(config: &RunConfig, xis: &[f64]) -> Result<SweepTable, CliError> {
    let base = prepare(config)?;
    let mut rows = Vec::with_capacity(xis.len());
    for &xi in xis {
        let prepared = base.with_xi(xi)?;
        let row = run_row(&prepared, xi, config.repeats);
        log::info!("xi {xi:e}: {} in {:.4} s", row.status, row.time);
        rows.push(row);
    }
    finish_sweep(config, &base, "xi", rows)
}

fn finish_sweep(
    config: &RunConfig,
    base: &Prepared,
    key_name: &'static str,
    rows: Vec<SweepRow>,
) -> Result<SweepTable, CliError> {
    create_dir(&config.output_dir)?;
    let path = config
        .output_dir
        .join(format!("{}.sweep_{key_name}.csv", base.scenario.name));
    let table = SweepTable {
        key_name,
        rows,
        path,
    };
    write_text(&table.path, &render_sweep(&table, base, config))?;
    Ok(table)
}
