#![allow(dead_code)]

use icop::{BoundedPlane, ChainPose, JointConfig, RobotChain, Scene, Segment};
use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_config(rng: &mut impl Rng) -> JointConfig {
    JointConfig::from_fn(|_, _| rng.random_range(-2.8..2.8))
}

pub fn random_point(rng: &mut impl Rng, half: f64) -> Point3<f64> {
    Point3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

pub fn random_isometry(rng: &mut impl Rng) -> Isometry3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(-3.0..3.0);
    let rotation = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
    let t = random_point(rng, 3.0);
    Isometry3::from_parts(Translation3::from(t.coords), rotation)
}

fn plane(
    frame: &Isometry3<f64>,
    local_normal: Vector3<f64>,
    local_boundary: Vec<Point3<f64>>,
) -> BoundedPlane {
    let normal = frame.rotation * local_normal;
    let mut boundary: Vec<Point3<f64>> = local_boundary.iter().map(|p| frame * p).collect();
    let offset = normal.dot(&boundary[0].coords);
    BoundedPlane::new(normal, offset, boundary.clone())
        .or_else(|_| {
            boundary.reverse();
            BoundedPlane::new(normal, offset, boundary)
        })
        .expect("box faces are convex")
}

/// Rectangular tunnel along the local +z axis of `frame`: entrance at
/// z = 0 facing -z, walls at x = +-hw and y = +-hh, back cap at z = depth.
pub fn box_tunnel(frame: &Isometry3<f64>, hw: f64, hh: f64, depth: f64) -> Scene {
    let p = Point3::new;
    let ring = |z: f64| vec![p(-hw, -hh, z), p(hw, -hh, z), p(hw, hh, z), p(-hw, hh, z)];
    let front = ring(0.0);
    let back = ring(depth);
    let mut planes = vec![plane(frame, -Vector3::z(), front.clone())];
    let inward = [Vector3::y(), -Vector3::x(), -Vector3::y(), Vector3::x()];
    for k in 0..4 {
        let j = (k + 1) % 4;
        planes.push(plane(
            frame,
            inward[k],
            vec![front[k], front[j], back[j], back[k]],
        ));
    }
    planes.push(plane(frame, -Vector3::z(), back));
    let fringe = (0..4)
        .map(|k| Segment::new(frame * front[k], frame * front[(k + 1) % 4]))
        .collect();
    Scene::new(planes, fringe, 0).expect("box tunnel is consistent")
}

/// A box tunnel swallowing the far part of the tool capsule at `q`.
pub fn tunnel_around_tool(chain: &RobotChain, q: &JointConfig, rng: &mut impl Rng) -> Scene {
    let pose = ChainPose::new(chain, q);
    let flange = pose.frames()[5];
    let tilt = UnitQuaternion::from_euler_angles(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        0.0,
    );
    let entry = flange
        * Point3::new(
            rng.random_range(-0.02..0.02),
            rng.random_range(-0.02..0.02),
            rng.random_range(0.1..0.2),
        );
    let rotation = UnitQuaternion::from_rotation_matrix(&flange.rotation) * tilt;
    let frame = Isometry3::from_parts(Translation3::from(entry.coords), rotation);
    box_tunnel(
        &frame,
        rng.random_range(0.06..0.15),
        rng.random_range(0.06..0.15),
        0.5,
    )
}
