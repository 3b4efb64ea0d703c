//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! timing is not disturbed by other tests running in parallel.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use icop::{
    body_point_jacobian, forward_kinematics, scene_distance, segment_bounded_planes_distance,
    segment_segment_distance, solve, BodyPoint, JointConfig, QpProblem, QpSettings, QpStatus,
    RobotChain, Segment, DOF,
};
use icop_tools::cli::{check_trajectory, cmd_plan, prepare, Prepared, RunConfig};
use icop_tools::load_scenario;
use nalgebra::{DMatrix, DVector, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCENARIOS: [&str; 4] = ["c1", "c2", "c3", "c4"];
const MAX_PLAN_SECONDS: f64 = 60.0;
const MAX_MEAN_TCP_ERROR: f64 = 5e-5;
const MAX_MEDIAN_INNER: usize = 5;
const MAX_INNER: usize = 15;
const HORIZONS: [usize; 5] = [14, 21, 43, 82, 164];
const TIMING_REPEATS: usize = 9;
const MIN_R_SQUARED: f64 = 0.95;
const DOUBLING_RATIO: (f64, f64) = (1.5, 2.5);
const XIS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const KINEMATIC_SAMPLES: usize = 1000;
const JACOBIAN_TOL: f64 = 1e-6;
const FK_TOL: f64 = 1e-12;
const DISTANCE_SAMPLES: usize = 1000;
const DISTANCE_TOL: f64 = 2e-3;
const RIGID_TOL: f64 = 1e-9;
const QP_SAMPLES: usize = 500;
const QP_GAP_TOL: f64 = 1e-7;
const KKT_TOL: f64 = 1e-8;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.scenario"))
}

fn prepared(name: &str) -> Prepared {
    prepare(&RunConfig::new(scenario_path(name), "unused")).expect("scenario loads")
}

type Outcome = Result<String, String>;

fn plans() -> Vec<(
    &'static str,
    Prepared,
    Result<icop::Trajectory, icop::PlanError>,
    f64,
)> {
    SCENARIOS
        .iter()
        .map(|name| {
            let p = prepared(name);
            let start = Instant::now();
            let traj = p.plan();
            let secs = start.elapsed().as_secs_f64();
            (*name, p, traj, secs)
        })
        .collect()
}

type Plans = [(
    &'static str,
    Prepared,
    Result<icop::Trajectory, icop::PlanError>,
    f64,
)];

fn constraints_hold(plans: &Plans) -> Outcome {
    let mut notes = Vec::new();
    for (name, p, traj, secs) in plans {
        let traj = traj.as_ref().map_err(|e| format!("{name}: {e}"))?;
        let violations = check_trajectory(p, traj);
        if !violations.is_empty() {
            return Err(format!("{name}: {}", violations[0]));
        }
        if *secs > MAX_PLAN_SECONDS {
            return Err(format!("{name}: {secs:.2} s"));
        }
        notes.push(format!("{name} {:.1} ms", secs * 1e3));
    }
    Ok(notes.join(", "))
}

fn tracking_accuracy(plans: &Plans) -> Outcome {
    let mut notes = Vec::new();
    for (name, _, traj, _) in plans {
        let traj = traj.as_ref().map_err(|e| format!("{name}: {e}"))?;
        let mean = traj.steps.iter().map(|s| s.tcp_error).sum::<f64>() / traj.len() as f64;
        if mean.is_nan() || mean > MAX_MEAN_TCP_ERROR {
            return Err(format!("{name}: mean {mean:.3e}"));
        }
        notes.push(format!("{name} {mean:.2e}"));
    }
    Ok(notes.join(", "))
}

fn inner_iterations(plans: &Plans) -> Outcome {
    let mut all: Vec<usize> = Vec::new();
    for (name, _, traj, _) in plans {
        let traj = traj.as_ref().map_err(|e| format!("{name}: {e}"))?;
        all.extend(traj.steps.iter().map(|s| s.inner_iterations));
    }
    all.sort_unstable();
    let median = all[all.len() / 2];
    let max = *all.last().unwrap();
    let note = format!("median {median}, max {max}");
    if median <= MAX_MEDIAN_INNER && max <= MAX_INNER {
        Ok(note)
    } else {
        Err(note)
    }
}

fn linear_scaling() -> Outcome {
    let base = prepared("c4");
    let variants: Vec<Prepared> = HORIZONS
        .iter()
        .map(|h| base.with_horizon(*h).unwrap())
        .collect();
    let mut best = [f64::INFINITY; HORIZONS.len()];
    for _ in 0..TIMING_REPEATS {
        for (k, v) in variants.iter().enumerate() {
            let start = Instant::now();
            v.plan()
                .map_err(|e| format!("horizon {}: {e}", HORIZONS[k]))?;
            best[k] = best[k].min(start.elapsed().as_secs_f64());
        }
    }
    let xs: Vec<f64> = HORIZONS.iter().map(|h| *h as f64).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, best.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&best).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&best)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let ss_tot: f64 = best.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let i43 = HORIZONS.iter().position(|h| *h == 43).unwrap();
    let i82 = HORIZONS.iter().position(|h| *h == 82).unwrap();
    let ratio = best[i82] / best[i43];
    let times: Vec<String> = best.iter().map(|t| format!("{:.2}", t * 1e3)).collect();
    let note = format!(
        "R^2 {r2:.4}, 82/43 ratio {ratio:.2}, ms [{}]",
        times.join(", ")
    );
    if r2 >= MIN_R_SQUARED && (DOUBLING_RATIO.0..=DOUBLING_RATIO.1).contains(&ratio) {
        Ok(note)
    } else {
        Err(note)
    }
}

fn threshold_monotone() -> Outcome {
    let base = prepared("c4");
    let mut totals = Vec::new();
    for xi in XIS {
        let traj = base
            .with_xi(xi)
            .unwrap()
            .plan()
            .map_err(|e| format!("xi {xi:e}: {e}"))?;
        totals.push(traj.steps.iter().map(|s| s.inner_iterations).sum::<usize>());
    }
    let note = format!("totals {totals:?} for xi {XIS:?}");
    if totals.windows(2).all(|w| w[1] >= w[0]) {
        Ok(note)
    } else {
        Err(note)
    }
}

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn dh(theta: f64, d: f64, a: f64, alpha: f64) -> M4 {
    let (st, ct, sa, ca) = (theta.sin(), theta.cos(), alpha.sin(), alpha.cos());
    [
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn iso_to_m4(iso: &Isometry3<f64>) -> M4 {
    let m = iso.to_homogeneous();
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

fn oracle_tool(chain: &RobotChain, q: &JointConfig) -> [f64; 3] {
    let mut t = iso_to_m4(chain.base());
    for (j, joint) in chain.joints().iter().enumerate() {
        t = mul(
            &t,
            &dh(
                q[j] + joint.angle_offset,
                joint.link_offset,
                joint.link_length,
                joint.link_twist,
            ),
        );
    }
    t = mul(&t, &iso_to_m4(chain.tool()));
    [t[0][3], t[1][3], t[2][3]]
}

fn kinematics() -> Outcome {
    let chain = load_scenario(&scenario_path("c1")).unwrap().chain;
    let tip = BodyPoint::tool_tip();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_fk, mut worst_jac) = (0.0f64, 0.0f64);
    let h = 1e-6;
    for _ in 0..KINEMATIC_SAMPLES {
        let q = JointConfig::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let fk = forward_kinematics(&q, &chain)[DOF] * Point3::origin();
        let oracle = oracle_tool(&chain, &q);
        for k in 0..3 {
            worst_fk = worst_fk.max((fk[k] - oracle[k]).abs());
        }
        let jac = body_point_jacobian(&q, &chain, &tip);
        for j in 0..DOF {
            let mut qp = q;
            let mut qm = q;
            qp[j] += h;
            qm[j] -= h;
            let (p, m) = (oracle_tool(&chain, &qp), oracle_tool(&chain, &qm));
            for k in 0..3 {
                worst_jac = worst_jac.max((jac[(k, j)] - (p[k] - m[k]) / (2.0 * h)).abs());
            }
        }
    }
    let note = format!("fk {worst_fk:.1e}, jacobian {worst_jac:.1e}");
    if worst_fk <= FK_TOL && worst_jac <= JACOBIAN_TOL {
        Ok(note)
    } else {
        Err(note)
    }
}

fn point_segment(p: &Point3<f64>, s: &Segment) -> f64 {
    let d = s.b - s.a;
    let t = if d.norm_squared() == 0.0 {
        0.0
    } else {
        ((p - s.a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0)
    };
    (p - (s.a + d * t)).norm()
}

/// Distance from a point on `s1` to `s2` is convex along `s1`, so a dense
/// scan followed by golden-section refinement finds the minimum.
fn oracle_segment_distance(s1: &Segment, s2: &Segment) -> f64 {
    let f = |u: f64| point_segment(&(s1.a + (s1.b - s1.a) * u), s2);
    let grid = 200;
    let k = (0..=grid)
        .min_by(|a, b| f(*a as f64 / grid as f64).total_cmp(&f(*b as f64 / grid as f64)))
        .unwrap();
    let (mut lo, mut hi) = (
        ((k as f64 - 1.0) / grid as f64).max(0.0),
        ((k as f64 + 1.0) / grid as f64).min(1.0),
    );
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
}

fn random_segment(rng: &mut ChaCha8Rng, centre: Vector3<f64>, half: f64) -> Segment {
    let mut p = || Point3::from(centre + Vector3::from_fn(|_, _| rng.random_range(-half..half)));
    Segment::new(p(), p())
}

fn random_isometry(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    Isometry3::from_parts(
        Translation3::from(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))),
        UnitQuaternion::from_scaled_axis(axis.normalize() * angle),
    )
}

fn distances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_ss = 0.0f64;
    for _ in 0..DISTANCE_SAMPLES {
        let s1 = random_segment(&mut rng, Vector3::zeros(), 1.0);
        let s2 = random_segment(&mut rng, Vector3::zeros(), 1.0);
        let d = segment_segment_distance(&s1, &s2).distance;
        worst_ss = worst_ss.max((d - oracle_segment_distance(&s1, &s2)).abs());
    }

    let p = prepared("c1");
    let planes = p.scene.planes();
    let entrance = p.scene.entrance_index();
    let centre = p.path[p.path.len() / 2].coords;
    let mut worst_sp = 0.0f64;
    let mut checked = 0;
    while checked < DISTANCE_SAMPLES {
        let seg = random_segment(&mut rng, centre, 0.3);
        let d = segment_bounded_planes_distance(&seg, planes, entrance);
        if !d.is_finite() {
            continue;
        }
        checked += 1;
        let samples = 10_000;
        let mut oracle = f64::INFINITY;
        for i in 0..=samples {
            let x = seg.at(i as f64 / samples as f64);
            if planes[entrance].height(&x) > 0.0 {
                continue;
            }
            for (k, plane) in planes.iter().enumerate() {
                if k != entrance {
                    oracle = oracle.min(plane.height(&x));
                }
            }
        }
        if oracle.is_finite() {
            worst_sp = worst_sp.max((d - oracle).abs());
        }
    }

    let chain = p.scenario.chain.clone();
    let capsules = &p.scenario.capsules;
    let mut worst_rigid = 0.0f64;
    for _ in 0..DISTANCE_SAMPLES {
        let q = JointConfig::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let motion = random_isometry(&mut rng);
        let a = scene_distance(&q, &chain, capsules, &p.scene).value;
        let b = scene_distance(
            &q,
            &chain.rebased(&motion),
            capsules,
            &p.scene.transformed(&motion),
        )
        .value;
        worst_rigid = worst_rigid.max((a - b).abs());
    }

    let note = format!("segment {worst_ss:.1e}, tunnel {worst_sp:.1e}, rigid {worst_rigid:.1e}");
    if worst_ss <= DISTANCE_TOL && worst_sp <= DISTANCE_TOL && worst_rigid <= RIGID_TOL {
        Ok(note)
    } else {
        Err(note)
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let (top, rest) = a.split_at_mut(r);
            for (x, p) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Minimum over every active set: solve the equality-constrained KKT system
/// and keep the best primal-feasible point.
fn enumerate_qp(p: &QpProblem) -> Option<f64> {
    let n = p.dim();
    let meq = p.eq_matrix.nrows();
    // Candidate active rows as (row, rhs): general rows, then lower, then upper bounds.
    let mut rows: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::new();
    for i in 0..p.ineq_matrix.nrows() {
        rows.push((
            p.ineq_matrix.row(i).iter().copied().collect(),
            p.ineq_rhs[i],
            None,
        ));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), p.lower[j], Some(j)));
        rows.push((e, p.upper[j], Some(j)));
    }
    let feasible = |x: &DVector<f64>| {
        (p.ineq_matrix.nrows() == 0 || (&p.ineq_matrix * x - &p.ineq_rhs).min() >= -1e-9)
            && (0..n).all(|j| x[j] >= p.lower[j] - 1e-9 && x[j] <= p.upper[j] + 1e-9)
            && (meq == 0 || (&p.eq_matrix * x - &p.eq_rhs).amax() <= 1e-9)
    };
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() + meq > n {
            continue;
        }
        let vars: Vec<usize> = active.iter().filter_map(|i| rows[*i].2).collect();
        if (1..vars.len()).any(|k| vars[..k].contains(&vars[k])) {
            continue;
        }
        let m = meq + active.len();
        let size = n + m;
        let mut a = vec![vec![0.0; size]; size];
        let mut b = vec![0.0; size];
        for (i, row) in a.iter_mut().take(n).enumerate() {
            for (j, v) in row.iter_mut().take(n).enumerate() {
                *v = p.hessian[(i, j)];
            }
            b[i] = -p.linear[i];
        }
        let constraint_rows = (0..meq)
            .map(|r| {
                (
                    p.eq_matrix.row(r).iter().copied().collect::<Vec<_>>(),
                    p.eq_rhs[r],
                )
            })
            .chain(active.iter().map(|i| (rows[*i].0.clone(), rows[*i].1)));
        for (k, (row, rhs)) in constraint_rows.enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[n + k][j] = *v;
                a[j][n + k] = *v;
            }
            b[n + k] = rhs;
        }
        let Some(sol) = gauss(a, b) else { continue };
        let x = DVector::from_column_slice(&sol[..n]);
        if feasible(&x) {
            let f = p.objective(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(2..=4);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let target = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let inner = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let rows = rng.random_range(0..=3);
    let c = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
    let d = &c * &inner - DVector::from_fn(rows, |_, _| rng.random_range(0.01..0.5));
    let lower = DVector::from_fn(n, |i, _| inner[i] - rng.random_range(0.1..1.0));
    let upper = DVector::from_fn(n, |i, _| inner[i] + rng.random_range(0.1..1.0));
    let eqs = rng.random_range(0..=1);
    let a = DMatrix::from_fn(eqs, n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &inner;
    QpProblem::tracking(h, &target)
        .with_equalities(a, b)
        .with_inequalities(c, d)
        .with_bounds(lower, upper)
}

fn qp_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    for i in 0..QP_SAMPLES {
        let p = random_qp(&mut rng);
        let sol = solve(&p, &QpSettings::default()).map_err(|e| format!("problem {i}: {e:?}"))?;
        if sol.status != QpStatus::Optimal {
            return Err(format!("problem {i}: {:?}", sol.status));
        }
        let oracle = enumerate_qp(&p).ok_or(format!("problem {i}: oracle found nothing"))?;
        worst_gap = worst_gap.max((sol.objective(&p) - oracle).abs());
        worst_kkt = worst_kkt.max(sol.kkt_residual);
    }
    let note = format!("gap {worst_gap:.1e}, kkt {worst_kkt:.1e}");
    if worst_gap <= QP_GAP_TOL && worst_kkt <= KKT_TOL {
        Ok(note)
    } else {
        Err(note)
    }
}

fn reproducible() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let bytes: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let report = cmd_plan(&RunConfig::new(scenario_path("c1"), d.path()))
                .map_err(|e| e.to_string())?;
            std::fs::read(&report.trajectory_path).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    if bytes[0] == bytes[1] {
        Ok(format!("{} bytes identical", bytes[0].len()))
    } else {
        Err("trajectory files differ".to_string())
    }
}

fn main() -> ExitCode {
    let plans = plans();
    let results: [(&str, Outcome); 9] = [
        (
            "constraints hold on every scenario",
            constraints_hold(&plans),
        ),
        ("mean tool-tip error", tracking_accuracy(&plans)),
        ("inner iterations per step", inner_iterations(&plans)),
        ("time grows linearly with horizon", linear_scaling()),
        (
            "iterations do not drop as the threshold tightens",
            threshold_monotone(),
        ),
        ("kinematics against an independent chain", kinematics()),
        ("distances against sampling oracles", distances()),
        ("QP against active-set enumeration", qp_optimality()),
        ("repeated runs are byte-identical", reproducible()),
    ];
    let mut failed = 0;
    for (i, (label, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(note) => println!("criterion {}: PASS {label} ({note})", i + 1),
            Err(note) => {
                failed += 1;
                println!("criterion {}: FAIL {label} ({note})", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
