//! Iterative convex optimization for contact-constrained trajectory planning.
//!
//! A 6-DOF serial arm has to keep its tool tip on a Cartesian path (a weld
//! seam, a polishing track) while every link capsule stays clear of a
//! confined workpiece tunnel. The planner walks the path one waypoint at a
//! time. For each waypoint it repeatedly
//!
//! 1. linearizes the capsule/tunnel signed distance into a halfspace around
//!    the current reference configuration ([`cfs`]),
//! 2. linearizes the tool-tip position constraint with the body-point
//!    Jacobian ([`equality`]),
//! 3. solves the resulting small strictly convex QP ([`qp`]),
//!
//! until the tool tip is within `xi` of the target and the configuration is
//! collision free ([`planner`]).
//!
//! The crate is `no_std` and only needs `alloc`. Enable the `std` feature to
//! let `nalgebra` use the platform math library.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cfs;
pub mod equality;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod path;
pub mod planner;
pub mod qp;

pub use cfs::{
    convex_feasible_set, convexify_collision, ConvexFeasibleSet, ConvexifyOptions, LinearInequality,
};
pub use equality::{linearize_contacts, linearize_task, LinearEquality};
pub use geometry::{
    apply_mounting, capsule_distances, classify_capsule, distance_gradient, min_witness,
    mounting_transform, scene_distance, segment_bounded_planes_distance, segment_segment_distance,
    tunnel_clearance, witness_gradient, BoundedPlane, Capsule, CapsuleSet, CaseTag,
    DistanceWitness, GeometryError, PlaneError, Scene, Segment, SegmentCase, SegmentProximity,
    TunnelClearance,
};
pub use kinematics::{
    body_point_jacobian, body_point_position, forward_kinematics, BodyPoint, ChainError, ChainPose,
    DhJoint, JointConfig, RobotChain, DOF,
};
pub use metrics::{compute_metrics, MetricsReport};
pub use planner::{
    plan, plan_with_clock, safetrack, Clock, NullClock, PlanError, PlannerParams, SafeTrackFailure,
    SafeTrackOutcome, StepDiagnostics, Trajectory,
};
pub use qp::{solve, QpError, QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};
