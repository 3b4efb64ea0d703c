//! Forward kinematics and translational body-point Jacobians for an
//! all-revolute serial chain described by standard DH parameters.
//!
//! Frames are numbered the way [`forward_kinematics`] returns them: frame `i`
//! (for `i < 6`) is the frame attached after joint `i`, frame 6 is the tool
//! frame. A point fixed in frame `i` is moved by joints `0..=min(i, 5)`.

use core::f64::consts::PI;
use core::fmt;

use nalgebra::{
    Isometry3, IsometryMatrix3, Matrix3x6, Point3, Rotation3, Translation3, Vector3, Vector6,
};

/// Number of joints in a chain.
pub const DOF: usize = 6;

/// Joint angles in radians.
pub type JointConfig = Vector6<f64>;

/// One revolute joint in standard DH form: `Rz(q + angle_offset) Tz(link_offset) Tx(link_length) Rx(link_twist)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhJoint {
    pub link_length: f64,
    pub link_twist: f64,
    pub link_offset: f64,
    pub angle_offset: f64,
}

impl DhJoint {
    pub const fn new(
        link_length: f64,
        link_twist: f64,
        link_offset: f64,
        angle_offset: f64,
    ) -> Self {
        Self {
            link_length,
            link_twist,
            link_offset,
            angle_offset,
        }
    }

    /// Transform from the previous frame to this joint's frame at angle `q`.
    pub fn transform(&self, q: f64) -> IsometryMatrix3<f64> {
        let theta = q + self.angle_offset;
        let (st, ct) = (libm::sin(theta), libm::cos(theta));
        let (sa, ca) = (libm::sin(self.link_twist), libm::cos(self.link_twist));
        #[rustfmt::skip]
        let rot = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
            ct, -st * ca,  st * sa,
            st,  ct * ca, -ct * sa,
            0.0,      sa,       ca,
        ));
        let t = Translation3::new(
            self.link_length * ct,
            self.link_length * st,
            self.link_offset,
        );
        IsometryMatrix3::from_parts(t, rot)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainError {
    NonFinite {
        joint: usize,
    },
    AngleOutOfRange {
        joint: usize,
        field: &'static str,
        value: f64,
    },
    NonFiniteTransform(&'static str),
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::NonFinite { joint } => {
                write!(f, "joint {joint} has a non-finite parameter")
            }
            ChainError::AngleOutOfRange {
                joint,
                field,
                value,
            } => {
                write!(f, "joint {joint} {field} = {value} is outside (-pi, pi]")
            }
            ChainError::NonFiniteTransform(which) => write!(f, "{which} transform is not finite"),
        }
    }
}

impl core::error::Error for ChainError {}

/// Kinematic description of a 6-joint revolute arm.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotChain {
    joints: [DhJoint; DOF],
    tool: Isometry3<f64>,
    base: Isometry3<f64>,
}

fn angle_in_range(a: f64) -> bool {
    a > -PI && a <= PI
}

fn isometry_finite(iso: &Isometry3<f64>) -> bool {
    iso.translation.vector.iter().all(|v| v.is_finite())
        && iso.rotation.coords.iter().all(|v| v.is_finite())
}

impl RobotChain {
    pub fn new(joints: [DhJoint; DOF], tool: Isometry3<f64>) -> Result<Self, ChainError> {
        Self::with_base(joints, tool, Isometry3::identity())
    }

    pub fn with_base(
        joints: [DhJoint; DOF],
        tool: Isometry3<f64>,
        base: Isometry3<f64>,
    ) -> Result<Self, ChainError> {
        for (i, j) in joints.iter().enumerate() {
            let all = [j.link_length, j.link_twist, j.link_offset, j.angle_offset];
            if all.iter().any(|v| !v.is_finite()) {
                return Err(ChainError::NonFinite { joint: i });
            }
            if !angle_in_range(j.link_twist) {
                return Err(ChainError::AngleOutOfRange {
                    joint: i,
                    field: "link_twist",
                    value: j.link_twist,
                });
            }
            if !angle_in_range(j.angle_offset) {
                return Err(ChainError::AngleOutOfRange {
                    joint: i,
                    field: "angle_offset",
                    value: j.angle_offset,
                });
            }
        }
        if !isometry_finite(&tool) {
            return Err(ChainError::NonFiniteTransform("tool"));
        }
        if !isometry_finite(&base) {
            return Err(ChainError::NonFiniteTransform("base"));
        }
        Ok(Self { joints, tool, base })
    }

    pub fn joints(&self) -> &[DhJoint; DOF] {
        &self.joints
    }

    pub fn tool(&self) -> &Isometry3<f64> {
        &self.tool
    }

    pub fn base(&self) -> &Isometry3<f64> {
        &self.base
    }

    /// Same chain with its base moved by `motion` (applied on the world side).
    pub fn rebased(&self, motion: &Isometry3<f64>) -> Self {
        Self {
            joints: self.joints,
            tool: self.tool,
            base: motion * self.base,
        }
    }

    /// A chain with the published Motoman GP50 arm dimensions and a
    /// straight 0.4 m grinding tool along the flange axis.
    pub fn gp50() -> Self {
        use core::f64::consts::FRAC_PI_2;
        let joints = [
            DhJoint::new(0.145, -FRAC_PI_2, 0.540, 0.0),
            DhJoint::new(0.870, 0.0, 0.0, -FRAC_PI_2),
            DhJoint::new(0.210, -FRAC_PI_2, 0.0, 0.0),
            DhJoint::new(0.0, FRAC_PI_2, 1.025, 0.0),
            DhJoint::new(0.0, -FRAC_PI_2, 0.0, 0.0),
            DhJoint::new(0.0, 0.0, 0.175, 0.0),
        ];
        let tool = Isometry3::translation(0.0, 0.0, 0.4);
        Self::new(joints, tool).expect("built-in chain is valid")
    }
}

/// Returns true when `q` has only finite entries.
pub fn is_valid_config(q: &JointConfig) -> bool {
    q.iter().all(|v| v.is_finite())
}

/// A point rigidly attached to one of the chain frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyPoint {
    pub link: usize,
    pub local: Point3<f64>,
}

impl BodyPoint {
    pub fn new(link: usize, local: Point3<f64>) -> Self {
        debug_assert!(link <= DOF, "link index {link} out of range");
        Self { link, local }
    }

    /// Origin of the tool frame.
    pub fn tool_tip() -> Self {
        Self {
            link: DOF,
            local: Point3::origin(),
        }
    }
}

/// All chain frames at one configuration, plus the joint axes needed for
/// Jacobians. Build once and query many points.
#[derive(Clone, Debug)]
pub struct ChainPose {
    base: IsometryMatrix3<f64>,
    frames: [IsometryMatrix3<f64>; DOF + 1],
}

impl ChainPose {
    pub fn new(chain: &RobotChain, q: &JointConfig) -> Self {
        let base: IsometryMatrix3<f64> = IsometryMatrix3::from_parts(
            chain.base.translation,
            chain.base.rotation.to_rotation_matrix(),
        );
        let mut frames = [IsometryMatrix3::identity(); DOF + 1];
        let mut acc = base;
        for (i, joint) in chain.joints.iter().enumerate() {
            acc *= joint.transform(q[i]);
            frames[i] = acc;
        }
        let tool = IsometryMatrix3::from_parts(
            chain.tool.translation,
            chain.tool.rotation.to_rotation_matrix(),
        );
        frames[DOF] = acc * tool;
        Self { base, frames }
    }

    pub fn frames(&self) -> &[IsometryMatrix3<f64>; DOF + 1] {
        &self.frames
    }

    pub fn tool_position(&self) -> Point3<f64> {
        self.frames[DOF].translation.vector.into()
    }

    pub fn point(&self, p: &BodyPoint) -> Point3<f64> {
        self.frames[p.link] * p.local
    }

    /// Frame whose z axis is the rotation axis of joint `j`.
    fn joint_frame(&self, j: usize) -> &IsometryMatrix3<f64> {
        if j == 0 {
            &self.base
        } else {
            &self.frames[j - 1]
        }
    }

    /// Translational Jacobian of a world point rigidly attached to frame `link`.
    pub fn jacobian_at(&self, link: usize, world: &Point3<f64>) -> Matrix3x6<f64> {
        let mut jac = Matrix3x6::zeros();
        let moving = link.min(DOF - 1);
        for j in 0..=moving {
            let frame = self.joint_frame(j);
            let axis: Vector3<f64> = frame.rotation * Vector3::z();
            let origin = frame.translation.vector;
            jac.set_column(j, &axis.cross(&(world.coords - origin)));
        }
        jac
    }

    pub fn jacobian(&self, p: &BodyPoint) -> Matrix3x6<f64> {
        self.jacobian_at(p.link, &self.point(p))
    }
}

/// Base-to-frame transforms for the six joint frames and the tool frame.
pub fn forward_kinematics(q: &JointConfig, chain: &RobotChain) -> [IsometryMatrix3<f64>; DOF + 1] {
    ChainPose::new(chain, q).frames
}

pub fn body_point_position(q: &JointConfig, chain: &RobotChain, p: &BodyPoint) -> Point3<f64> {
    ChainPose::new(chain, q).point(p)
}

pub fn body_point_jacobian(q: &JointConfig, chain: &RobotChain, p: &BodyPoint) -> Matrix3x6<f64> {
    ChainPose::new(chain, q).jacobian(p)
}
