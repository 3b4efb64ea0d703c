//! Signed distance between the arm's capsule hull and a workpiece tunnel
//! built from bounded planes.
//!
//! A capsule whose axis does not pass through the entrance opening is
//! measured against the fringe segments (the opening's edges). A capsule
//! whose axis does pass through the opening is a working segment: its
//! in-tunnel portion is measured against the tunnel walls treated as
//! halfspaces, so leaving the tunnel cross-section reads negative.
//!
//! Plane normals point toward free space. For the entrance surface that is
//! out of the workpiece, toward the robot.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3, Vector6};

use crate::kinematics::{ChainPose, JointConfig, RobotChain, DOF};

const PLANE_TOL: f64 = 1e-9;
const ZERO_LEN: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
}

impl Segment {
    pub fn new(a: Point3<f64>, b: Point3<f64>) -> Self {
        Self { a, b }
    }

    pub fn at(&self, u: f64) -> Point3<f64> {
        self.a + (self.b - self.a) * u
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self::new(iso * self.a, iso * self.b)
    }
}

/// Closest approach of two segments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentProximity {
    pub distance: f64,
    pub s: f64,
    pub t: f64,
    pub on_first: Point3<f64>,
    pub on_second: Point3<f64>,
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Minimum distance between two segments and the parameters achieving it.
pub fn segment_segment_distance(s1: &Segment, s2: &Segment) -> SegmentProximity {
    let d1 = s1.b - s1.a;
    let d2 = s2.b - s2.a;
    let r = s1.a - s2.a;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);

    let (s, t) = if a <= ZERO_LEN && e <= ZERO_LEN {
        (0.0, 0.0)
    } else if a <= ZERO_LEN {
        (0.0, clamp01(f / e))
    } else {
        let c = d1.dot(&r);
        if e <= ZERO_LEN {
            (clamp01(-c / a), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > 1e-14 * a * e {
                clamp01((b * f - c * e) / denom)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = clamp01(-c / a);
            } else if t > 1.0 {
                t = 1.0;
                s = clamp01((b - c) / a);
            }
            (s, t)
        }
    };
    let on_first = s1.at(s);
    let on_second = s2.at(t);
    SegmentProximity {
        distance: (on_first - on_second).norm(),
        s,
        t,
        on_first,
        on_second,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlaneError {
    NonUnitNormal(f64),
    TooFewVertices(usize),
    VertexOffPlane { vertex: usize, height: f64 },
    NotConvex { vertex: usize },
}

impl fmt::Display for PlaneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaneError::NonUnitNormal(n) => write!(f, "normal has length {n}, expected 1"),
            PlaneError::TooFewVertices(n) => {
                write!(f, "boundary has {n} vertices, need at least 3")
            }
            PlaneError::VertexOffPlane { vertex, height } => {
                write!(f, "boundary vertex {vertex} is {height:e} m off the plane")
            }
            PlaneError::NotConvex { vertex } => write!(
                f,
                "boundary is not a convex counter-clockwise polygon at vertex {vertex}"
            ),
        }
    }
}

/// A plane limited to a convex polygon, `{p : normal . p = offset}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundedPlane {
    normal: Unit<Vector3<f64>>,
    offset: f64,
    boundary: Vec<Point3<f64>>,
}

impl BoundedPlane {
    /// `boundary` must be convex and counter-clockwise seen from the side the
    /// normal points to.
    pub fn new(
        normal: Vector3<f64>,
        offset: f64,
        boundary: Vec<Point3<f64>>,
    ) -> Result<Self, PlaneError> {
        let len = normal.norm();
        if !((len - 1.0).abs() <= 1e-12) {
            return Err(PlaneError::NonUnitNormal(len));
        }
        if boundary.len() < 3 {
            return Err(PlaneError::TooFewVertices(boundary.len()));
        }
        let normal = Unit::new_unchecked(normal);
        for (i, v) in boundary.iter().enumerate() {
            let h = normal.dot(&v.coords) - offset;
            if !(h.abs() <= PLANE_TOL) {
                return Err(PlaneError::VertexOffPlane {
                    vertex: i,
                    height: h,
                });
            }
        }
        let n = boundary.len();
        let scale = boundary
            .iter()
            .map(|v| (v - boundary[0]).norm())
            .fold(0.0, f64::max);
        for i in 0..n {
            let (p0, p1, p2) = (boundary[i], boundary[(i + 1) % n], boundary[(i + 2) % n]);
            let turn = (p1 - p0).cross(&(p2 - p1)).dot(&normal);
            if !(turn > 1e-12 * scale * scale) {
                return Err(PlaneError::NotConvex {
                    vertex: (i + 1) % n,
                });
            }
        }
        Ok(Self {
            normal,
            offset,
            boundary,
        })
    }

    pub fn normal(&self) -> &Unit<Vector3<f64>> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn boundary(&self) -> &[Point3<f64>] {
        &self.boundary
    }

    /// Signed height of `p` above the plane along the normal.
    pub fn height(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    /// Whether the projection of `p` onto the plane lies in the boundary polygon.
    pub fn contains_projection(&self, p: &Point3<f64>) -> bool {
        let n = self.boundary.len();
        (0..n).all(|i| {
            let v0 = self.boundary[i];
            let v1 = self.boundary[(i + 1) % n];
            (v1 - v0).cross(&(p - v0)).dot(&self.normal) >= -1e-12
        })
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let normal = iso.rotation * self.normal;
        let offset = self.offset + normal.dot(&iso.translation.vector);
        Self {
            normal,
            offset,
            boundary: self.boundary.iter().map(|v| iso * v).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    Plane { index: usize, error: PlaneError },
    EntranceOutOfRange { index: usize, planes: usize },
    FringeOffEntrance { segment: usize },
    FringeNotOnEdge { segment: usize },
    DegenerateFringe { segment: usize },
    CapsuleRadius { capsule: usize, radius: f64 },
    CapsuleEndpoints { capsule: usize },
    CapsuleLink { capsule: usize, link: usize },
    NoCapsules,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::Plane { index, error } => write!(f, "plane {index}: {error}"),
            GeometryError::EntranceOutOfRange { index, planes } => {
                write!(f, "entrance plane index {index} but only {planes} planes")
            }
            GeometryError::FringeOffEntrance { segment } => {
                write!(
                    f,
                    "fringe segment {segment} does not lie on the entrance plane"
                )
            }
            GeometryError::FringeNotOnEdge { segment } => write!(
                f,
                "fringe segment {segment} does not lie on any other plane of the tunnel"
            ),
            GeometryError::DegenerateFringe { segment } => {
                write!(f, "fringe segment {segment} has coincident endpoints")
            }
            GeometryError::CapsuleRadius { capsule, radius } => {
                write!(f, "capsule {capsule} has radius {radius}, must be > 0")
            }
            GeometryError::CapsuleEndpoints { capsule } => {
                write!(f, "capsule {capsule} has coincident endpoints")
            }
            GeometryError::CapsuleLink { capsule, link } => {
                write!(
                    f,
                    "capsule {capsule} is attached to link {link}, chain has {}",
                    DOF + 1
                )
            }
            GeometryError::NoCapsules => write!(f, "capsule set is empty"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// A link capsule: the axis segment lives in the frame of `link`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub link: usize,
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn world_axis(&self, pose: &ChainPose) -> Segment {
        let frame = &pose.frames()[self.link];
        Segment::new(frame * self.a, frame * self.b)
    }
}

/// The collision hull of the arm. Never empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleSet(Vec<Capsule>);

impl CapsuleSet {
    pub fn new(capsules: Vec<Capsule>) -> Result<Self, GeometryError> {
        if capsules.is_empty() {
            return Err(GeometryError::NoCapsules);
        }
        for (i, c) in capsules.iter().enumerate() {
            if !(c.radius > 0.0) || !c.radius.is_finite() {
                return Err(GeometryError::CapsuleRadius {
                    capsule: i,
                    radius: c.radius,
                });
            }
            if !((c.b - c.a).norm() > 0.0) {
                return Err(GeometryError::CapsuleEndpoints { capsule: i });
            }
            if c.link > DOF {
                return Err(GeometryError::CapsuleLink {
                    capsule: i,
                    link: c.link,
                });
            }
        }
        Ok(Self(capsules))
    }

    pub fn as_slice(&self) -> &[Capsule] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Six capsules wrapping the links of [`RobotChain::gp50`]. The last one
    /// covers the tool shaft and stops 0.1 m short of the tip.
    pub fn gp50() -> Self {
        let p = Point3::new;
        Self::new(alloc::vec![
            Capsule {
                link: 0,
                a: p(-0.145, 0.30, 0.0),
                b: p(0.0, 0.0, 0.0),
                radius: 0.15
            },
            Capsule {
                link: 1,
                a: p(-0.87, 0.0, 0.0),
                b: p(0.0, 0.0, 0.0),
                radius: 0.12
            },
            Capsule {
                link: 2,
                a: p(0.0, 0.0, 0.0),
                b: p(0.0, 0.0, 0.80),
                radius: 0.10
            },
            Capsule {
                link: 3,
                a: p(0.0, -0.25, 0.0),
                b: p(0.0, 0.0, 0.0),
                radius: 0.08
            },
            Capsule {
                link: 4,
                a: p(0.0, 0.0, 0.0),
                b: p(0.0, 0.0, 0.175),
                radius: 0.07
            },
            Capsule {
                link: 5,
                a: p(0.0, 0.0, 0.0),
                b: p(0.0, 0.0, 0.30),
                radius: 0.025
            },
        ])
        .expect("built-in capsules are valid")
    }
}

/// Obstacle world: bounded planes, the fringe of the entrance opening, and
/// which plane is the entrance surface.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    planes: Vec<BoundedPlane>,
    fringe: Vec<Segment>,
    entrance: usize,
}

impl Scene {
    pub fn new(
        planes: Vec<BoundedPlane>,
        fringe: Vec<Segment>,
        entrance: usize,
    ) -> Result<Self, GeometryError> {
        if entrance >= planes.len() {
            return Err(GeometryError::EntranceOutOfRange {
                index: entrance,
                planes: planes.len(),
            });
        }
        let ent = &planes[entrance];
        for (i, seg) in fringe.iter().enumerate() {
            if seg.length() <= 0.0 {
                return Err(GeometryError::DegenerateFringe { segment: i });
            }
            if ent.height(&seg.a).abs() > PLANE_TOL || ent.height(&seg.b).abs() > PLANE_TOL {
                return Err(GeometryError::FringeOffEntrance { segment: i });
            }
            let on_edge = planes.iter().enumerate().any(|(k, pl)| {
                k != entrance
                    && pl.height(&seg.a).abs() <= PLANE_TOL
                    && pl.height(&seg.b).abs() <= PLANE_TOL
            });
            if !on_edge {
                return Err(GeometryError::FringeNotOnEdge { segment: i });
            }
        }
        Ok(Self {
            planes,
            fringe,
            entrance,
        })
    }

    pub fn planes(&self) -> &[BoundedPlane] {
        &self.planes
    }

    pub fn fringe(&self) -> &[Segment] {
        &self.fringe
    }

    pub fn entrance_index(&self) -> usize {
        self.entrance
    }

    pub fn entrance(&self) -> &BoundedPlane {
        &self.planes[self.entrance]
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            planes: self.planes.iter().map(|p| p.transformed(iso)).collect(),
            fringe: self.fringe.iter().map(|s| s.transformed(iso)).collect(),
            entrance: self.entrance,
        }
    }
}

/// Rotation `alpha` about world y followed by translation `l` along world x.
pub fn mounting_transform(l: f64, alpha: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(l, 0.0, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), alpha),
    )
}

pub fn apply_mounting(scene: &Scene, l: f64, alpha: f64) -> Scene {
    scene.transformed(&mounting_transform(l, alpha))
}

/// Which distance rule applies to a capsule axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentCase {
    /// Does not pass through the entrance opening; measured against the fringe.
    Fringe,
    /// Passes through the entrance opening; measured against the tunnel walls.
    Tunnel,
}

pub fn classify_capsule(axis: &Segment, scene: &Scene) -> SegmentCase {
    let ent = scene.entrance();
    let (ha, hb) = (ent.height(&axis.a), ent.height(&axis.b));
    if ha * hb >= 0.0 {
        return SegmentCase::Fringe;
    }
    let crossing = axis.at(ha / (ha - hb));
    if ent.contains_projection(&crossing) {
        SegmentCase::Tunnel
    } else {
        SegmentCase::Fringe
    }
}

/// Worst point of a segment's in-tunnel portion against the tunnel walls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunnelClearance {
    pub value: f64,
    pub plane: usize,
    /// Position of the worst point along the segment.
    pub param: f64,
    /// The worst point is where the segment crosses the entrance plane.
    pub at_crossing: bool,
}

/// Exact clearance of the portion of `seg` behind the entrance plane, or
/// `None` if no part of it is behind the entrance plane.
pub fn tunnel_clearance(
    seg: &Segment,
    planes: &[BoundedPlane],
    entrance: usize,
) -> Option<TunnelClearance> {
    let ent = &planes[entrance];
    let (ha, hb) = (ent.height(&seg.a), ent.height(&seg.b));
    let mut candidates: [(f64, bool); 2] = [(0.0, false), (1.0, false)];
    match (ha <= 0.0, hb <= 0.0) {
        (true, true) => {}
        (false, false) => return None,
        (true, false) => candidates[1] = (ha / (ha - hb), true),
        (false, true) => candidates[0] = (ha / (ha - hb), true),
    }
    let mut best: Option<TunnelClearance> = None;
    for (k, plane) in planes.iter().enumerate() {
        if k == entrance {
            continue;
        }
        for &(u, at_crossing) in &candidates {
            let h = plane.height(&seg.at(u));
            if best.is_none_or(|b| h < b.value) {
                best = Some(TunnelClearance {
                    value: h,
                    plane: k,
                    param: u,
                    at_crossing,
                });
            }
        }
    }
    best
}

/// Signed clearance of a working segment's in-tunnel portion to the walls.
/// Positive inside the tunnel cross-section, negative once any in-tunnel
/// point leaves it. `+inf` when nothing of the segment is in the tunnel.
pub fn segment_bounded_planes_distance(
    seg: &Segment,
    planes: &[BoundedPlane],
    entrance: usize,
) -> f64 {
    tunnel_clearance(seg, planes, entrance).map_or(f64::INFINITY, |c| c.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseTag {
    Fringe,
    Tunnel,
}

/// The argmin of the capsule/obstacle distance, carrying what the gradient needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceWitness {
    /// Signed surface clearance in meters (capsule radius already subtracted).
    pub value: f64,
    pub capsule_index: usize,
    /// On the capsule axis.
    pub point_on_robot: Point3<f64>,
    pub point_on_obstacle: Point3<f64>,
    pub case_tag: CaseTag,
    /// Fringe segment index for [`CaseTag::Fringe`], plane index for [`CaseTag::Tunnel`].
    pub obstacle_index: usize,
    /// Position of `point_on_robot` along the capsule axis.
    pub axis_param: f64,
    /// Unit direction in which moving the robot point increases `value`.
    pub direction: Vector3<f64>,
    /// `point_on_robot` is the entrance crossing and slides along the axis.
    pub sliding: bool,
}

fn capsule_witness(
    index: usize,
    capsule: &Capsule,
    axis: &Segment,
    scene: &Scene,
) -> DistanceWitness {
    match classify_capsule(axis, scene) {
        SegmentCase::Tunnel => {
            let c = tunnel_clearance(axis, scene.planes(), scene.entrance_index())
                .expect("tunnel case has an in-tunnel portion");
            let plane = &scene.planes()[c.plane];
            let p = axis.at(c.param);
            DistanceWitness {
                value: c.value - capsule.radius,
                capsule_index: index,
                point_on_robot: p,
                point_on_obstacle: p - plane.normal().into_inner() * c.value,
                case_tag: CaseTag::Tunnel,
                obstacle_index: c.plane,
                axis_param: c.param,
                direction: plane.normal().into_inner(),
                sliding: c.at_crossing,
            }
        }
        SegmentCase::Fringe => {
            let mut best: Option<(usize, SegmentProximity)> = None;
            for (k, f) in scene.fringe().iter().enumerate() {
                let prox = segment_segment_distance(axis, f);
                if best.is_none_or(|(_, b)| prox.distance < b.distance) {
                    best = Some((k, prox));
                }
            }
            match best {
                Some((k, prox)) => {
                    let gap = prox.on_first - prox.on_second;
                    let direction = if prox.distance > 1e-12 {
                        gap / prox.distance
                    } else {
                        // touching: any unit vector is a subgradient; push out of the workpiece
                        scene.entrance().normal().into_inner()
                    };
                    DistanceWitness {
                        value: prox.distance - capsule.radius,
                        capsule_index: index,
                        point_on_robot: prox.on_first,
                        point_on_obstacle: prox.on_second,
                        case_tag: CaseTag::Fringe,
                        obstacle_index: k,
                        axis_param: prox.s,
                        direction,
                        sliding: false,
                    }
                }
                None => DistanceWitness {
                    value: f64::INFINITY,
                    capsule_index: index,
                    point_on_robot: axis.a,
                    point_on_obstacle: axis.a,
                    case_tag: CaseTag::Fringe,
                    obstacle_index: 0,
                    axis_param: 0.0,
                    direction: Vector3::zeros(),
                    sliding: false,
                },
            }
        }
    }
}

/// One witness per capsule, in capsule order.
pub fn capsule_distances(
    pose: &ChainPose,
    capsules: &CapsuleSet,
    scene: &Scene,
) -> Vec<DistanceWitness> {
    capsules
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, c)| capsule_witness(i, c, &c.world_axis(pose), scene))
        .collect()
}

/// The minimizing witness; ties go to the lowest capsule index.
pub fn min_witness(witnesses: &[DistanceWitness]) -> DistanceWitness {
    let mut best = witnesses[0];
    for w in &witnesses[1..] {
        if w.value < best.value {
            best = *w;
        }
    }
    best
}

/// Minimum signed clearance between the capsule hull and the scene.
pub fn scene_distance(
    q: &JointConfig,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
) -> DistanceWitness {
    let pose = ChainPose::new(chain, q);
    min_witness(&capsule_distances(&pose, capsules, scene))
}

/// Configuration-space gradient of a witness's distance.
pub fn witness_gradient(
    pose: &ChainPose,
    capsules: &CapsuleSet,
    scene: &Scene,
    w: &DistanceWitness,
) -> Vector6<f64> {
    let capsule = &capsules.as_slice()[w.capsule_index];
    let jac = pose.jacobian_at(capsule.link, &w.point_on_robot);
    let mut grad: Vector6<f64> = (w.direction.transpose() * jac).transpose();
    if w.sliding {
        // The entrance crossing slides along the axis as the link moves.
        let axis = capsule.world_axis(pose);
        let ent = scene.entrance();
        let n_e = ent.normal().into_inner();
        let (ha, hb) = (ent.height(&axis.a), ent.height(&axis.b));
        let ja = pose.jacobian_at(capsule.link, &axis.a);
        let jb = pose.jacobian_at(capsule.link, &axis.b);
        let dha = (n_e.transpose() * ja).transpose();
        let dhb = (n_e.transpose() * jb).transpose();
        let denom = (ha - hb) * (ha - hb);
        let du = (dhb * ha - dha * hb) / denom;
        grad += du * w.direction.dot(&(axis.b - axis.a));
    }
    grad
}

/// Gradient of [`scene_distance`] with respect to the joint angles.
pub fn distance_gradient(
    q: &JointConfig,
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
) -> Vector6<f64> {
    let pose = ChainPose::new(chain, q);
    let w = min_witness(&capsule_distances(&pose, capsules, scene));
    witness_gradient(&pose, capsules, scene, &w)
}
