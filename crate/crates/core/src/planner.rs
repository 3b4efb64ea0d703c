//! Waypoint-by-waypoint planner.
//!
//! The outer loop walks the Cartesian path. For each waypoint the inner
//! loop ([`safetrack`]) starts from the previous state and repeats
//! convexify, linearize, solve until the tool tip is within `xi` of the
//! waypoint and the true clearance is non-negative. The QP objective is the
//! weighted distance to the current reference, not to the previous state.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, Point3, Vector6};

use crate::cfs::{convexify_collision, ConvexifyOptions};
use crate::equality::linearize_task;
use crate::geometry::{capsule_distances, min_witness, CapsuleSet, Scene};
use crate::kinematics::{is_valid_config, BodyPoint, ChainPose, JointConfig, RobotChain, DOF};
use crate::path::subdivide;
use crate::qp::{solve, QpProblem, QpSettings, QpStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerParams {
    /// Diagonal of the joint weight matrix.
    pub q_diag: Vector6<f64>,
    /// Tool-tip tracking tolerance, meters.
    pub xi: f64,
    pub max_inner: usize,
    /// Longest Cartesian move attempted in one inner loop, meters.
    pub step_max: f64,
    pub joint_lower: JointConfig,
    pub joint_upper: JointConfig,
    pub per_capsule_rows: bool,
    pub rounds: usize,
    /// Extra clearance demanded by the linearized collision rows, meters.
    pub margin: f64,
    /// How many times a failing Cartesian move is halved before giving up.
    pub max_bisections: usize,
    pub qp: QpSettings,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            q_diag: Vector6::repeat(1.0),
            xi: 1e-4,
            max_inner: 50,
            step_max: 0.05,
            joint_lower: JointConfig::repeat(-core::f64::consts::PI),
            joint_upper: JointConfig::repeat(core::f64::consts::PI),
            per_capsule_rows: false,
            rounds: 1,
            margin: 0.0,
            max_bisections: 3,
            qp: QpSettings::default(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |what: &'static str| Err(PlanError::InvalidParams(what));
        if !(self.xi > 0.0) || !self.xi.is_finite() {
            return bad("xi must be positive");
        }
        if self.max_inner < 1 {
            return bad("max_inner must be at least 1");
        }
        if self.rounds < 1 {
            return bad("rounds must be at least 1");
        }
        if !self.q_diag.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return bad("q_diag must be positive");
        }
        if !(self.step_max > 0.0) || !self.step_max.is_finite() {
            return bad("step_max must be positive");
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return bad("margin must be non-negative");
        }
        if (0..DOF).any(|i| !(self.joint_lower[i] <= self.joint_upper[i])) {
            return bad("joint_lower must not exceed joint_upper");
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        (0..DOF).all(|i| q[i] >= self.joint_lower[i] && q[i] <= self.joint_upper[i])
    }

    fn convexify_options(&self) -> ConvexifyOptions {
        ConvexifyOptions {
            per_capsule_rows: self.per_capsule_rows,
            margin: self.margin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub tool_position: Point3<f64>,
    pub tcp_error: f64,
    pub min_distance: f64,
    pub inner_iterations: usize,
    /// Seconds, as measured by the planner's clock.
    pub solve_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<JointConfig>,
    pub steps: Vec<StepDiagnostics>,
    pub total_time: f64,
    pub xi: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanError {
    InvalidParams(&'static str),
    EmptyPath,
    InitialOutOfLimits,
    InitialInCollision {
        distance: f64,
    },
    NonFiniteInitial,
    NonConverged {
        waypoint: usize,
        iterations: usize,
        residual: f64,
        distance: f64,
        qp_status: Option<QpStatus>,
    },
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::InvalidParams(why) => write!(f, "invalid planner parameters: {why}"),
            PlanError::EmptyPath => write!(f, "path has no waypoints"),
            PlanError::InitialOutOfLimits => {
                write!(f, "initial configuration violates joint limits")
            }
            PlanError::InitialInCollision { distance } => {
                write!(
                    f,
                    "initial configuration is in collision (distance {distance:e} m)"
                )
            }
            PlanError::NonFiniteInitial => write!(f, "initial configuration is not finite"),
            PlanError::NonConverged {
                waypoint,
                iterations,
                residual,
                distance,
                qp_status,
            } => {
                write!(
                    f,
                    "waypoint {waypoint} did not converge after {iterations} inner iterations \
                     (residual {residual:e} m, distance {distance:e} m"
                )?;
                if let Some(s) = qp_status {
                    write!(f, ", last QP {s:?}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl core::error::Error for PlanError {}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Reports zero; for builds without a clock.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafeTrackOutcome {
    pub q: JointConfig,
    pub iterations: usize,
    pub residual: f64,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafeTrackFailure {
    /// Best iterate seen: collision free if any was, then lowest residual.
    pub best: SafeTrackOutcome,
    pub iterations: usize,
    pub qp_status: Option<QpStatus>,
}

struct Evaluated {
    q: JointConfig,
    residual: f64,
    distance: f64,
}

fn evaluate(
    q: JointConfig,
    c_next: &Point3<f64>,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
) -> Evaluated {
    let pose = ChainPose::new(chain, &q);
    let residual = (pose.tool_position() - c_next).norm();
    let distance = min_witness(&capsule_distances(&pose, capsules, scene)).value;
    Evaluated {
        q,
        residual,
        distance,
    }
}

fn better(a: &Evaluated, b: &SafeTrackOutcome) -> bool {
    match (a.distance >= 0.0, b.distance >= 0.0) {
        (true, false) => true,
        (false, true) => false,
        _ => a.residual < b.residual,
    }
}

/// Inner loop: moves the tool tip from where `q_pre` puts it onto `c_next`.
pub fn safetrack(
    q_pre: &JointConfig,
    c_next: &Point3<f64>,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
    params: &PlannerParams,
) -> Result<SafeTrackOutcome, SafeTrackFailure> {
    let tool = BodyPoint::tool_tip();
    let hessian = DMatrix::from_diagonal(&DVector::from_column_slice(params.q_diag.as_slice()));
    let lower = DVector::from_column_slice(params.joint_lower.as_slice());
    let upper = DVector::from_column_slice(params.joint_upper.as_slice());
    let options = params.convexify_options();

    let mut current = evaluate(*q_pre, c_next, chain, capsules, scene);
    let mut best = SafeTrackOutcome {
        q: current.q,
        iterations: 0,
        residual: current.residual,
        distance: current.distance,
    };
    let mut iterations = 0;
    let mut qp_status = None;

    while current.residual > params.xi || current.distance < 0.0 {
        if iterations >= params.max_inner {
            return Err(SafeTrackFailure {
                best,
                iterations,
                qp_status,
            });
        }
        let q_ref = current.q;
        let c_ref = ChainPose::new(chain, &q_ref).tool_position();
        let rows = convexify_collision(&q_ref, chain, capsules, scene, &options);
        let eq = linearize_task(&q_ref, &c_ref, c_next, chain, &tool);

        let x_ref = DVector::from_column_slice(q_ref.as_slice());
        let mut ineq = DMatrix::zeros(rows.len(), DOF);
        let mut ineq_rhs = DVector::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            ineq.set_row(i, &r.normal.transpose());
            ineq_rhs[i] = r.bound;
        }
        let eq_matrix = DMatrix::from_fn(eq.rows(), DOF, |r, c| eq.matrix[(r, c)]);
        let problem = QpProblem::tracking(hessian.clone(), &x_ref)
            .with_equalities(eq_matrix, eq.rhs.clone())
            .with_inequalities(ineq, ineq_rhs)
            .with_bounds(lower.clone(), upper.clone());
        let sol = solve(&problem, &params.qp).expect("planner builds valid QPs");
        iterations += 1;
        qp_status = Some(sol.status);
        if sol.status == QpStatus::Infeasible {
            return Err(SafeTrackFailure {
                best,
                iterations,
                qp_status,
            });
        }

        let mut q = JointConfig::from_column_slice(sol.x.as_slice());
        for i in 0..DOF {
            q[i] = q[i].clamp(params.joint_lower[i], params.joint_upper[i]);
        }
        if !is_valid_config(&q) {
            return Err(SafeTrackFailure {
                best,
                iterations,
                qp_status,
            });
        }
        current = evaluate(q, c_next, chain, capsules, scene);
        if better(&current, &best) {
            best = SafeTrackOutcome {
                q: current.q,
                iterations,
                residual: current.residual,
                distance: current.distance,
            };
        }
    }
    Ok(SafeTrackOutcome {
        q: current.q,
        iterations,
        residual: current.residual,
        distance: current.distance,
    })
}

/// Tracks `c_to` from `q_from`, halving the Cartesian move on failure.
fn track_with_bisection(
    q_from: &JointConfig,
    c_to: &Point3<f64>,
    depth: usize,
    ctx: &Context<'_>,
    spent: &mut usize,
) -> Result<SafeTrackOutcome, SafeTrackFailure> {
    match safetrack(q_from, c_to, ctx.chain, ctx.capsules, ctx.scene, ctx.params) {
        Ok(out) => {
            *spent += out.iterations;
            Ok(out)
        }
        Err(fail) => {
            *spent += fail.iterations;
            if depth >= ctx.params.max_bisections {
                return Err(fail);
            }
            let c_from = ChainPose::new(ctx.chain, q_from).tool_position();
            let mid = c_from + (c_to - c_from) * 0.5;
            let half = track_with_bisection(q_from, &mid, depth + 1, ctx, spent)?;
            track_with_bisection(&half.q, c_to, depth + 1, ctx, spent)
        }
    }
}

struct Context<'a> {
    chain: &'a RobotChain,
    capsules: &'a CapsuleSet,
    scene: &'a Scene,
    params: &'a PlannerParams,
}

/// Plans a joint trajectory whose tool tip visits every waypoint of `path`.
pub fn plan(
    path: &[Point3<f64>],
    q_init: &JointConfig,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
    params: &PlannerParams,
) -> Result<Trajectory, PlanError> {
    plan_with_clock(path, q_init, chain, capsules, scene, params, &NullClock)
}

pub fn plan_with_clock(
    path: &[Point3<f64>],
    q_init: &JointConfig,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
    params: &PlannerParams,
    clock: &dyn Clock,
) -> Result<Trajectory, PlanError> {
    params.validate()?;
    if path.is_empty() {
        return Err(PlanError::EmptyPath);
    }
    if !is_valid_config(q_init) {
        return Err(PlanError::NonFiniteInitial);
    }
    if !params.within_limits(q_init) {
        return Err(PlanError::InitialOutOfLimits);
    }
    let start = evaluate(*q_init, &path[0], chain, capsules, scene);
    if start.distance < 0.0 {
        return Err(PlanError::InitialInCollision {
            distance: start.distance,
        });
    }

    let ctx = Context {
        chain,
        capsules,
        scene,
        params,
    };
    let t_start = clock.now();
    let mut previous: Option<Vec<JointConfig>> = None;
    let mut states = Vec::with_capacity(path.len());
    let mut steps = Vec::with_capacity(path.len());

    for _round in 0..params.rounds {
        states.clear();
        steps.clear();
        let mut q_pre = *q_init;
        for (t, target) in path.iter().enumerate() {
            let t0 = clock.now();
            // Later rounds start each waypoint from the previous round's answer.
            if let Some(prev) = &previous {
                q_pre = prev[t];
            }
            let c_pre = ChainPose::new(chain, &q_pre).tool_position();
            let mut spent = 0;
            let mut q = q_pre;
            let mut last = None;
            for leg in subdivide(&c_pre, target, params.step_max) {
                match track_with_bisection(&q, &leg, 0, &ctx, &mut spent) {
                    Ok(out) => {
                        q = out.q;
                        last = Some(out);
                    }
                    Err(fail) => {
                        return Err(PlanError::NonConverged {
                            waypoint: t,
                            iterations: spent,
                            residual: fail.best.residual,
                            distance: fail.best.distance,
                            qp_status: fail.qp_status,
                        })
                    }
                }
            }
            let out = last.expect("subdivide yields at least one leg");
            states.push(out.q);
            steps.push(StepDiagnostics {
                tool_position: ChainPose::new(chain, &out.q).tool_position(),
                tcp_error: out.residual,
                min_distance: out.distance,
                inner_iterations: spent,
                solve_time: clock.now() - t0,
            });
            q_pre = out.q;
        }
        previous = Some(states.clone());
    }

    Ok(Trajectory {
        states,
        steps,
        total_time: clock.now() - t_start,
        xi: params.xi,
    })
}
