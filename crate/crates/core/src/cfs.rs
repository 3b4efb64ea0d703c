//! Convex feasible set around a reference configuration.
//!
//! Joint limits are already convex and pass through untouched. The distance
//! constraint `d(q) >= 0` is not, so it is replaced by its linearization at
//! the reference, `grad d(q_ref) . q >= grad d(q_ref) . q_ref - d(q_ref)`.
//! That halfspace may contain infeasible points; the planner re-checks the
//! true distance on every accepted iterate.

use alloc::vec::Vec;

use nalgebra::Vector6;

use crate::geometry::{capsule_distances, min_witness, witness_gradient, CapsuleSet, Scene};
use crate::kinematics::{ChainPose, JointConfig, RobotChain};

/// `{q : normal . q >= bound}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearInequality {
    pub normal: Vector6<f64>,
    pub bound: f64,
}

impl LinearInequality {
    /// `normal . q - bound`; non-negative inside.
    pub fn slack(&self, q: &JointConfig) -> f64 {
        self.normal.dot(q) - self.bound
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexifyOptions {
    /// One row per capsule instead of only the closest one.
    pub per_capsule_rows: bool,
    /// Added to every row's bound, in meters of clearance.
    pub margin: f64,
}

impl Default for ConvexifyOptions {
    fn default() -> Self {
        Self {
            per_capsule_rows: false,
            margin: 0.0,
        }
    }
}

fn row(grad: Vector6<f64>, q_ref: &JointConfig, value: f64, margin: f64) -> LinearInequality {
    LinearInequality {
        normal: grad,
        bound: grad.dot(q_ref) - value + margin,
    }
}

/// Linearized collision rows at `q_ref`.
pub fn convexify_collision(
    q_ref: &JointConfig,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
    options: &ConvexifyOptions,
) -> Vec<LinearInequality> {
    let pose = ChainPose::new(chain, q_ref);
    let witnesses = capsule_distances(&pose, capsules, scene);
    if options.per_capsule_rows {
        witnesses
            .iter()
            .filter(|w| w.value.is_finite())
            .map(|w| {
                row(
                    witness_gradient(&pose, capsules, scene, w),
                    q_ref,
                    w.value,
                    options.margin,
                )
            })
            .collect()
    } else {
        let w = min_witness(&witnesses);
        if !w.value.is_finite() {
            return Vec::new();
        }
        alloc::vec![row(
            witness_gradient(&pose, capsules, scene, &w),
            q_ref,
            w.value,
            options.margin
        )]
    }
}

/// Halfspaces plus the joint-limit box.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexFeasibleSet {
    pub rows: Vec<LinearInequality>,
    pub lower: JointConfig,
    pub upper: JointConfig,
}

impl ConvexFeasibleSet {
    pub fn contains(&self, q: &JointConfig, tol: f64) -> bool {
        self.rows.iter().all(|r| r.slack(q) >= -tol)
            && (0..q.len()).all(|i| q[i] >= self.lower[i] - tol && q[i] <= self.upper[i] + tol)
    }
}

pub fn convex_feasible_set(
    q_ref: &JointConfig,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
    lower: &JointConfig,
    upper: &JointConfig,
    options: &ConvexifyOptions,
) -> ConvexFeasibleSet {
    ConvexFeasibleSet {
        rows: convexify_collision(q_ref, chain, capsules, scene, options),
        lower: *lower,
        upper: *upper,
    }
}
