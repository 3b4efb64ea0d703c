//! Scenario files: robot, capsule hull, workpiece tunnel, weld seam, mounting
//! and planner parameters in one TOML document. See `docs/scenario-format.md`.

use std::fs;
use std::path::{Path, PathBuf};

use icop::{
    BoundedPlane, Capsule, CapsuleSet, DhJoint, JointConfig, PlannerParams, RobotChain, Scene,
    Segment, DOF,
};
use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Normals further than this from unit length are reported when re-normalized.
const NORMAL_WARN_TOL: f64 = 1e-9;
/// Normals closer than this to unit length are taken as written.
const NORMAL_EXACT_TOL: f64 = 1e-12;
const QUATERNION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: unsupported format_version {found} (expected {FORMAT_VERSION})", path.display())]
    Version { path: PathBuf, found: u32 },
    #[error("{}: invalid scenario:\n  {}", path.display(), problems.join("\n  "))]
    Invalid {
        path: PathBuf,
        problems: Vec<String>,
    },
}

/// Workpiece placement: rotation `alpha` about world y, then `l_cm`
/// centimeters along world x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mounting {
    pub l_cm: f64,
    pub alpha: f64,
}

impl Mounting {
    pub fn l_m(&self) -> f64 {
        self.l_cm / 100.0
    }

    pub fn transform(&self) -> Isometry3<f64> {
        icop::mounting_transform(self.l_m(), self.alpha)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub note: String,
    pub chain: RobotChain,
    pub capsules: CapsuleSet,
    /// In the workpiece frame, before mounting.
    pub scene: Scene,
    /// In the workpiece frame, before mounting.
    pub weld_path: Vec<Point3<f64>>,
    pub mounting: Mounting,
    pub params: PlannerParams,
    /// World-frame start configuration for the mounted workpiece.
    pub initial_config: JointConfig,
}

impl Scenario {
    pub fn mounted_scene(&self) -> Scene {
        self.scene.transformed(&self.mounting.transform())
    }

    pub fn mounted_weld_path(&self) -> Vec<Point3<f64>> {
        let iso = self.mounting.transform();
        self.weld_path.iter().map(|p| iso * p).collect()
    }

    pub fn horizon(&self) -> usize {
        self.weld_path.len()
    }
}

type V3 = [f64; 3];

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileDto {
    format_version: u32,
    name: String,
    #[serde(default)]
    note: String,
    chain: ChainDto,
    capsules: Vec<CapsuleDto>,
    planes: Vec<PlaneDto>,
    fringe: FringeDto,
    mounting: MountingDto,
    weld_path: WeldDto,
    params: ParamsDto,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ChainDto {
    joints: Vec<JointDto>,
    tool: PoseDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<PoseDto>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct JointDto {
    a: f64,
    alpha: f64,
    d: f64,
    theta_offset: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PoseDto {
    translation: V3,
    /// `[w, x, y, z]`.
    rotation: [f64; 4],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct CapsuleDto {
    link: usize,
    a: V3,
    b: V3,
    radius: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PlaneDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    normal: V3,
    offset: f64,
    boundary: Vec<V3>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FringeDto {
    entrance: usize,
    segments: Vec<[V3; 2]>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MountingDto {
    l_cm: f64,
    alpha: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct WeldDto {
    points: Vec<V3>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ParamsDto {
    q_diag: [f64; DOF],
    xi: f64,
    max_inner: usize,
    step_max: f64,
    joint_lower: [f64; DOF],
    joint_upper: [f64; DOF],
    per_capsule_rows: bool,
    rounds: usize,
    margin: f64,
    max_bisections: usize,
    initial_config: [f64; DOF],
}

fn pt(v: &V3) -> Point3<f64> {
    Point3::new(v[0], v[1], v[2])
}

fn arr(p: &Point3<f64>) -> V3 {
    [p.x, p.y, p.z]
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

/// Parses scenario text; `origin` only labels errors.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<Scenario, ScenarioError> {
    let dto: FileDto = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Parse {
            path: origin.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    if dto.format_version != FORMAT_VERSION {
        return Err(ScenarioError::Version {
            path: origin.to_path_buf(),
            found: dto.format_version,
        });
    }
    build(dto).map_err(|problems| ScenarioError::Invalid {
        path: origin.to_path_buf(),
        problems,
    })
}

fn pose(dto: &PoseDto, field: &str, problems: &mut Vec<String>) -> Isometry3<f64> {
    let [w, x, y, z] = dto.rotation;
    let q = Quaternion::new(w, x, y, z);
    let norm = q.norm();
    let rotation = if (norm - 1.0).abs() <= QUATERNION_TOL {
        UnitQuaternion::new_unchecked(q)
    } else if norm.is_finite() && norm > 0.0 {
        log::warn!("{field}.rotation has norm {norm}; normalizing");
        UnitQuaternion::from_quaternion(q)
    } else {
        problems.push(format!("{field}.rotation: quaternion has norm {norm}"));
        UnitQuaternion::identity()
    };
    let t = Translation3::new(dto.translation[0], dto.translation[1], dto.translation[2]);
    Isometry3::from_parts(t, rotation)
}

fn build(dto: FileDto) -> Result<Scenario, Vec<String>> {
    let mut problems = Vec::new();

    let chain = if dto.chain.joints.len() != DOF {
        problems.push(format!(
            "chain.joints: expected {DOF} joints, found {}",
            dto.chain.joints.len()
        ));
        None
    } else {
        let joints: [DhJoint; DOF] = core::array::from_fn(|i| {
            let j = &dto.chain.joints[i];
            DhJoint::new(j.a, j.alpha, j.d, j.theta_offset)
        });
        let tool = pose(&dto.chain.tool, "chain.tool", &mut problems);
        let base = dto.chain.base.as_ref().map_or(Isometry3::identity(), |b| {
            pose(b, "chain.base", &mut problems)
        });
        RobotChain::with_base(joints, tool, base)
            .map_err(|e| problems.push(format!("chain: {e}")))
            .ok()
    };

    for (i, c) in dto.capsules.iter().enumerate() {
        if !(c.radius > 0.0 && c.radius.is_finite()) {
            problems.push(format!(
                "capsules[{i}].radius: must be positive, found {}",
                c.radius
            ));
        }
        if c.link > DOF {
            problems.push(format!(
                "capsules[{i}].link: {} is past the tool frame ({DOF})",
                c.link
            ));
        }
        if c.a == c.b {
            problems.push(format!("capsules[{i}]: endpoints coincide"));
        }
    }
    let capsules = CapsuleSet::new(
        dto.capsules
            .iter()
            .map(|c| Capsule {
                link: c.link,
                a: pt(&c.a),
                b: pt(&c.b),
                radius: c.radius,
            })
            .collect(),
    );
    let capsules = match capsules {
        Ok(c) => Some(c),
        Err(e) => {
            if dto.capsules.is_empty() {
                problems.push(format!("capsules: {e}"));
            }
            None
        }
    };

    let mut planes = Vec::with_capacity(dto.planes.len());
    for (i, p) in dto.planes.iter().enumerate() {
        let mut normal = Vector3::from(p.normal);
        let mut offset = p.offset;
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite()) {
            problems.push(format!("planes[{i}].normal: length {len}"));
            continue;
        }
        if (len - 1.0).abs() > NORMAL_EXACT_TOL {
            if (len - 1.0).abs() > NORMAL_WARN_TOL {
                log::warn!("planes[{i}].normal has length {len}; normalizing");
            }
            normal /= len;
            offset /= len;
        }
        match BoundedPlane::new(normal, offset, p.boundary.iter().map(pt).collect()) {
            Ok(plane) => planes.push(plane),
            Err(e) => problems.push(format!("planes[{i}]: {e}")),
        }
    }
    let scene = if planes.len() == dto.planes.len() {
        let fringe = dto
            .fringe
            .segments
            .iter()
            .map(|[a, b]| Segment::new(pt(a), pt(b)))
            .collect();
        Scene::new(planes, fringe, dto.fringe.entrance)
            .map_err(|e| problems.push(format!("fringe: {e}")))
            .ok()
    } else {
        None
    };

    if !dto.mounting.l_cm.is_finite() || !dto.mounting.alpha.is_finite() {
        problems.push("mounting: l_cm and alpha must be finite".to_string());
    }
    let mounting = Mounting {
        l_cm: dto.mounting.l_cm,
        alpha: dto.mounting.alpha,
    };

    if dto.weld_path.points.is_empty() {
        problems.push("weld_path.points: must not be empty".to_string());
    }
    for (i, p) in dto.weld_path.points.iter().enumerate() {
        if p.iter().any(|v| !v.is_finite()) {
            problems.push(format!("weld_path.points[{i}]: not finite"));
        }
    }
    let weld_path: Vec<Point3<f64>> = dto.weld_path.points.iter().map(pt).collect();

    let pd = &dto.params;
    let params = PlannerParams {
        q_diag: Vector6::from(pd.q_diag),
        xi: pd.xi,
        max_inner: pd.max_inner,
        step_max: pd.step_max,
        joint_lower: JointConfig::from(pd.joint_lower),
        joint_upper: JointConfig::from(pd.joint_upper),
        per_capsule_rows: pd.per_capsule_rows,
        rounds: pd.rounds,
        margin: pd.margin,
        max_bisections: pd.max_bisections,
        ..PlannerParams::default()
    };
    if let Err(e) = params.validate() {
        problems.push(format!("params: {e}"));
    }
    let initial_config = JointConfig::from(pd.initial_config);
    if !params.within_limits(&initial_config) {
        problems.push("params.initial_config: outside joint limits".to_string());
    }

    if let Some(scene) = &scene {
        for (i, p) in weld_path.iter().enumerate() {
            if !inside_tunnel(scene, p) {
                log::warn!("weld_path.points[{i}] lies outside the tunnel");
            }
        }
    }

    match (chain, capsules, scene) {
        (Some(chain), Some(capsules), Some(scene)) if problems.is_empty() => Ok(Scenario {
            name: dto.name,
            note: dto.note,
            chain,
            capsules,
            scene,
            weld_path,
            mounting,
            params,
            initial_config,
        }),
        _ => Err(problems),
    }
}

/// Behind the entrance and on the free side of every other plane.
pub fn inside_tunnel(scene: &Scene, p: &Point3<f64>) -> bool {
    scene.planes().iter().enumerate().all(|(k, plane)| {
        if k == scene.entrance_index() {
            plane.height(p) <= 0.0
        } else {
            plane.height(p) >= 0.0
        }
    })
}

fn pose_dto(iso: &Isometry3<f64>) -> PoseDto {
    let q = iso.rotation.quaternion();
    let t = iso.translation.vector;
    PoseDto {
        translation: [t.x, t.y, t.z],
        rotation: [q.w, q.i, q.j, q.k],
    }
}

/// Renders `scenario` in the file format; [`parse_scenario`] reads it back
/// unchanged.
pub fn serialize(scenario: &Scenario) -> String {
    let chain = &scenario.chain;
    let dto = FileDto {
        format_version: FORMAT_VERSION,
        name: scenario.name.clone(),
        note: scenario.note.clone(),
        chain: ChainDto {
            joints: chain
                .joints()
                .iter()
                .map(|j| JointDto {
                    a: j.link_length,
                    alpha: j.link_twist,
                    d: j.link_offset,
                    theta_offset: j.angle_offset,
                })
                .collect(),
            tool: pose_dto(chain.tool()),
            base: (*chain.base() != Isometry3::identity()).then(|| pose_dto(chain.base())),
        },
        capsules: scenario
            .capsules
            .as_slice()
            .iter()
            .map(|c| CapsuleDto {
                link: c.link,
                a: arr(&c.a),
                b: arr(&c.b),
                radius: c.radius,
            })
            .collect(),
        planes: scenario
            .scene
            .planes()
            .iter()
            .enumerate()
            .map(|(k, p)| PlaneDto {
                label: (k == scenario.scene.entrance_index()).then(|| "entrance".to_string()),
                normal: p.normal().into_inner().into(),
                offset: p.offset(),
                boundary: p.boundary().iter().map(arr).collect(),
            })
            .collect(),
        fringe: FringeDto {
            entrance: scenario.scene.entrance_index(),
            segments: scenario
                .scene
                .fringe()
                .iter()
                .map(|s| [arr(&s.a), arr(&s.b)])
                .collect(),
        },
        mounting: MountingDto {
            l_cm: scenario.mounting.l_cm,
            alpha: scenario.mounting.alpha,
        },
        weld_path: WeldDto {
            points: scenario.weld_path.iter().map(arr).collect(),
        },
        params: ParamsDto {
            q_diag: scenario.params.q_diag.into(),
            xi: scenario.params.xi,
            max_inner: scenario.params.max_inner,
            step_max: scenario.params.step_max,
            joint_lower: scenario.params.joint_lower.into(),
            joint_upper: scenario.params.joint_upper.into(),
            per_capsule_rows: scenario.params.per_capsule_rows,
            rounds: scenario.params.rounds,
            margin: scenario.params.margin,
            max_bisections: scenario.params.max_bisections,
            initial_config: scenario.initial_config.into(),
        },
    };
    toml::to_string(&dto).expect("scenario DTO is always representable")
}
