//! Regenerates the bundled `scenarios/c*.scenario` files.
//!
//! The workpiece is a hexagonal prism tunnel along +y, open toward the robot
//! and closed by a back cap, eight bounded planes in all. The weld seam runs
//! along the floor centerline 5 mm above the floor. Each scenario mounts the
//! same workpiece differently; the start configuration comes from a damped
//! least-squares pose solve with the tool tilted toward the floor.
//!
//! cargo run -p icop-tools --example reconstruct_scenarios -- crates/tools/scenarios

use std::f64::consts::PI;
use std::path::PathBuf;

use icop::{
    mounting_transform, scene_distance, BoundedPlane, CapsuleSet, ChainPose, JointConfig,
    PlannerParams, RobotChain, Scene, Segment,
};
use icop_tools::scenario::{serialize, Mounting, Scenario};
use nalgebra::{Matrix6, Point3, Vector3, Vector6};

const CENTER_X: f64 = -0.3;
const CENTER_Z: f64 = 0.6;
const ENTRANCE_Y: f64 = 0.9;
const DEPTH: f64 = 0.35;
/// Center-to-wall distance of the hexagon.
const APOTHEM: f64 = 0.2;
const SEAM_LIFT: f64 = 0.005;
const SEAM_START: f64 = 0.05;
const SEAM_END: f64 = 0.25;
const HORIZON: usize = 43;
const TOOL_TILT_DEG: f64 = 30.0;

/// Rounds away floating-point dust so the files stay readable.
fn tidy(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn tidy_point(p: Point3<f64>) -> Point3<f64> {
    p.map(tidy)
}

fn plane(normal: Vector3<f64>, offset: f64, boundary: Vec<Point3<f64>>) -> BoundedPlane {
    // Snapping only exact-zero-ish components keeps the normal unit length.
    let normal = normal.map(|c| if c.abs() < 1e-15 { 0.0 } else { c });
    let mut boundary: Vec<Point3<f64>> = boundary.into_iter().map(tidy_point).collect();
    let offset = tidy(offset);
    BoundedPlane::new(normal, offset, boundary.clone())
        .or_else(|_| {
            boundary.reverse();
            BoundedPlane::new(normal, offset, boundary)
        })
        .expect("hexagon faces are convex")
}

fn workpiece() -> Scene {
    let back = ENTRANCE_Y + DEPTH;
    let face_angle = |k: usize| (-90.0 + 60.0 * k as f64).to_radians();
    let outward = |k: usize| Vector3::new(face_angle(k).cos(), 0.0, face_angle(k).sin());
    let circumradius = APOTHEM / 30f64.to_radians().cos();
    // Vertex k sits between face k and face k + 1.
    let vertex = |k: usize, y: f64| {
        let a = face_angle(k) + 30f64.to_radians();
        Point3::new(
            CENTER_X + circumradius * a.cos(),
            y,
            CENTER_Z + circumradius * a.sin(),
        )
    };
    let center = Vector3::new(CENTER_X, 0.0, CENTER_Z);

    let mut planes = vec![plane(
        -Vector3::y(),
        -ENTRANCE_Y,
        (0..6).map(|k| vertex(k, ENTRANCE_Y)).collect(),
    )];
    for k in 0..6 {
        let prev = (k + 5) % 6;
        planes.push(plane(
            -outward(k),
            -APOTHEM - outward(k).dot(&center),
            vec![
                vertex(prev, ENTRANCE_Y),
                vertex(k, ENTRANCE_Y),
                vertex(k, back),
                vertex(prev, back),
            ],
        ));
    }
    planes.push(plane(
        -Vector3::y(),
        -back,
        (0..6).map(|k| vertex(k, back)).collect(),
    ));
    let fringe = (0..6)
        .map(|k| {
            Segment::new(
                tidy_point(vertex((k + 5) % 6, ENTRANCE_Y)),
                tidy_point(vertex(k, ENTRANCE_Y)),
            )
        })
        .collect();
    Scene::new(planes, fringe, 0).expect("workpiece is consistent")
}

fn seam() -> Vec<Point3<f64>> {
    (0..HORIZON)
        .map(|i| {
            let s = SEAM_START + (SEAM_END - SEAM_START) * i as f64 / (HORIZON - 1) as f64;
            tidy_point(Point3::new(
                CENTER_X,
                ENTRANCE_Y + s,
                CENTER_Z - APOTHEM + SEAM_LIFT,
            ))
        })
        .collect()
}

/// Tool tip on `target` with the tool axis along `dir`.
fn pose_solve(
    chain: &RobotChain,
    target: Point3<f64>,
    dir: Vector3<f64>,
    seed: JointConfig,
) -> Option<JointConfig> {
    let residual = |q: &JointConfig| {
        let pose = ChainPose::new(chain, q);
        let axis = pose.frames()[6].rotation * Vector3::z();
        let p = pose.tool_position() - target;
        let o = axis - dir;
        Vector6::new(p.x, p.y, p.z, o.x, o.y, o.z)
    };
    let mut q = seed;
    for _ in 0..200 {
        let r = residual(&q);
        if r.norm() < 1e-13 {
            break;
        }
        let mut jac = Matrix6::zeros();
        for c in 0..6 {
            let (mut hi, mut lo) = (q, q);
            hi[c] += 1e-7;
            lo[c] -= 1e-7;
            jac.set_column(c, &((residual(&hi) - residual(&lo)) / 2e-7));
        }
        let jt = jac.transpose();
        q -= jt * (jac * jt + Matrix6::identity() * 1e-6).try_inverse()? * r;
    }
    (residual(&q).norm() < 1e-10).then(|| q.map(|a| (a + PI).rem_euclid(2.0 * PI) - PI))
}

fn start_config(
    chain: &RobotChain,
    capsules: &CapsuleSet,
    scene: &Scene,
    target: Point3<f64>,
    dir: Vector3<f64>,
) -> JointConfig {
    let mut best: Option<(f64, JointConfig)> = None;
    for s1 in [-1.0, 0.0, 1.0, 2.0] {
        for s2 in [-0.5, 0.3] {
            for s3 in [-0.5, 0.5] {
                for s4 in [-1.5, 0.0, 1.5] {
                    for s5 in [-1.0, 1.0] {
                        let seed = JointConfig::new(s1, s2, s3, s4, s5, 0.0);
                        let Some(q) = pose_solve(chain, target, dir, seed) else {
                            continue;
                        };
                        let d = scene_distance(&q, chain, capsules, scene).value;
                        // Prefer clearance, then small joint angles.
                        let score = d - 0.01 * q.norm();
                        if d > 0.0 && best.is_none_or(|(b, _)| score > b) {
                            best = Some((score, q));
                        }
                    }
                }
            }
        }
    }
    best.expect("some seed reaches the seam").1
}

fn main() {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/tools/scenarios".into()),
    );
    let chain = RobotChain::gp50();
    let capsules = CapsuleSet::gp50();
    let scene = workpiece();
    let weld_path = seam();
    let tilt = TOOL_TILT_DEG.to_radians();
    let tool_dir = Vector3::new(0.0, tilt.cos(), -tilt.sin());
    let params = PlannerParams {
        joint_lower: JointConfig::repeat(-PI),
        joint_upper: JointConfig::repeat(PI),
        ..PlannerParams::default()
    };

    for (name, l_cm, alpha) in [
        ("c1", 1.0, 0.2 * PI),
        ("c2", 135.0, 0.2 * PI),
        ("c3", 15.0, 0.0),
        ("c4", 18.0, 0.125 * PI),
    ] {
        let mounting = Mounting { l_cm, alpha };
        let iso = mounting_transform(mounting.l_m(), alpha);
        let mounted = scene.transformed(&iso);
        let initial_config = start_config(
            &chain,
            &capsules,
            &mounted,
            iso * weld_path[0],
            iso.rotation * tool_dir,
        );
        let scenario = Scenario {
            name: name.to_string(),
            note: format!(
                "Workpiece {name}: reconstructed geometry, not measured data.\n\
                 Hexagonal tunnel (apothem {APOTHEM} m, depth {DEPTH} m) along +y with its entrance at y = {ENTRANCE_Y} m;\n\
                 weld seam along the floor centerline, {SEAM_LIFT} m above the floor.\n\
                 Mounting length l_cm is in centimeters; alpha is in radians."
            ),
            chain: chain.clone(),
            capsules: capsules.clone(),
            scene: scene.clone(),
            weld_path: weld_path.clone(),
            mounting,
            params: params.clone(),
            initial_config,
        };
        let path = out.join(format!("{name}.scenario"));
        std::fs::write(&path, serialize(&scenario)).expect("write scenario");
        println!("{}", path.display());
    }
}
