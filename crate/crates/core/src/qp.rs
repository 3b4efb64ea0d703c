//! Dense strictly convex QP:
//!
//! ```text
//! minimize    1/2 x' H x + f' x
//! subject to  A x  = b
//!             C x >= d
//!             lower <= x <= upper
//! ```
//!
//! Equality rows are eliminated first with an SVD nullspace basis, so a
//! rank-deficient `A` is replaced by its least-squares-consistent part. The
//! reduced problem is solved by the Goldfarb-Idnani dual active-set method,
//! which starts from the unconstrained minimum and needs no feasible point.
//! Problems are tiny (six variables, a couple dozen rows), so every step
//! works with dense factorizations built from scratch.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QpError {
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NotSymmetric(f64),
    NotPositiveDefinite,
    InvertedBounds {
        index: usize,
    },
    NonFinite(&'static str),
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpError::Dimension {
                what,
                expected,
                found,
            } => {
                write!(f, "{what} has dimension {found}, expected {expected}")
            }
            QpError::NotSymmetric(err) => {
                write!(f, "hessian is not symmetric (max asymmetry {err:e})")
            }
            QpError::NotPositiveDefinite => write!(f, "hessian is not positive definite"),
            QpError::InvertedBounds { index } => {
                write!(f, "lower bound exceeds upper bound at {index}")
            }
            QpError::NonFinite(what) => write!(f, "{what} has non-finite entries"),
        }
    }
}

impl core::error::Error for QpError {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Accepted inequality violation.
    pub tol_feas: f64,
    /// Bound on the reported KKT residual for an optimal return.
    pub tol_kkt: f64,
    /// Relative singular-value cutoff for equality rows.
    pub rank_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_feas: 1e-10,
            tol_kkt: 1e-8,
            rank_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    /// May hold `-inf`.
    pub lower: DVector<f64>,
    /// May hold `+inf`.
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// No constraints and infinite bounds.
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    /// `min 1/2 (x - target)' H (x - target)` with no constraints.
    pub fn tracking(hessian: DMatrix<f64>, target: &DVector<f64>) -> Self {
        let linear = -(&hessian * target);
        Self::unconstrained(hessian, linear)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn with_equalities(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.eq_matrix = matrix;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_inequalities(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.ineq_matrix = matrix;
        self.ineq_rhs = rhs;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let dims = [
            ("hessian rows", self.hessian.nrows(), n),
            ("hessian cols", self.hessian.ncols(), n),
            ("equality matrix cols", self.eq_matrix.ncols(), n),
            ("equality rhs", self.eq_rhs.len(), self.eq_matrix.nrows()),
            ("inequality matrix cols", self.ineq_matrix.ncols(), n),
            (
                "inequality rhs",
                self.ineq_rhs.len(),
                self.ineq_matrix.nrows(),
            ),
            ("lower bounds", self.lower.len(), n),
            ("upper bounds", self.upper.len(), n),
        ];
        for (what, found, expected) in dims {
            if found != expected {
                return Err(QpError::Dimension {
                    what,
                    expected,
                    found,
                });
            }
        }
        let finite = [
            ("hessian", self.hessian.iter().all(|v| v.is_finite())),
            ("linear term", self.linear.iter().all(|v| v.is_finite())),
            (
                "equality matrix",
                self.eq_matrix.iter().all(|v| v.is_finite()),
            ),
            ("equality rhs", self.eq_rhs.iter().all(|v| v.is_finite())),
            (
                "inequality matrix",
                self.ineq_matrix.iter().all(|v| v.is_finite()),
            ),
            (
                "inequality rhs",
                self.ineq_rhs.iter().all(|v| v.is_finite()),
            ),
            (
                "lower bounds",
                self.lower
                    .iter()
                    .all(|v| !v.is_nan() && *v != f64::INFINITY),
            ),
            (
                "upper bounds",
                self.upper
                    .iter()
                    .all(|v| !v.is_nan() && *v != f64::NEG_INFINITY),
            ),
        ];
        if let Some((what, _)) = finite.iter().find(|(_, ok)| !ok) {
            return Err(QpError::NonFinite(what));
        }
        let scale = self.hessian.amax().max(1.0);
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(QpError::NotSymmetric(asym));
        }
        if self.hessian.clone().cholesky().is_none() {
            return Err(QpError::NotPositiveDefinite);
        }
        if let Some(i) = (0..n).find(|&i| self.lower[i] > self.upper[i]) {
            return Err(QpError::InvertedBounds { index: i });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    /// Max of stationarity, complementarity, and primal violation (infinity norms).
    pub kkt_residual: f64,
    /// `|A x - b|_inf` against the original equality rows.
    pub eq_residual: f64,
    pub iterations: usize,
    /// The equality rows were rank deficient and were projected.
    pub rank_deficient: bool,
    /// Multipliers for general inequality rows, then lower bounds, then upper bounds.
    pub multipliers: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
}

impl QpSolution {
    pub fn objective(&self, problem: &QpProblem) -> f64 {
        problem.objective(&self.x)
    }
}

/// A solver carrying its settings. One per thread.
#[derive(Clone, Debug, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings }
    }

    pub fn solve(&self, problem: &QpProblem) -> Result<QpSolution, QpError> {
        solve(problem, &self.settings)
    }
}

/// Constraint row `normal . x >= rhs`.
struct Row {
    normal: DVector<f64>,
    rhs: f64,
}

fn collect_rows(p: &QpProblem) -> Vec<Row> {
    let n = p.dim();
    let mut rows = Vec::with_capacity(p.ineq_matrix.nrows() + 2 * n);
    for i in 0..p.ineq_matrix.nrows() {
        rows.push(Row {
            normal: p.ineq_matrix.row(i).transpose(),
            rhs: p.ineq_rhs[i],
        });
    }
    let unit = |j: usize, s: f64| {
        let mut e = DVector::zeros(n);
        e[j] = s;
        e
    };
    for j in 0..n {
        rows.push(Row {
            normal: unit(j, 1.0),
            rhs: p.lower[j],
        });
    }
    for j in 0..n {
        rows.push(Row {
            normal: unit(j, -1.0),
            rhs: -p.upper[j],
        });
    }
    rows
}

/// Equality rows split into an orthonormal row-space basis and a nullspace basis.
struct EqualitySplit {
    /// Columns span the row space of `A` that survived the rank cut.
    range: DMatrix<f64>,
    /// Columns span the nullspace of the kept rows.
    null: DMatrix<f64>,
    /// Minimum-norm least-squares solution of `A x = b`.
    particular: DVector<f64>,
    rank_deficient: bool,
}

fn split_equalities(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> EqualitySplit {
    let n = a.ncols();
    let m = a.nrows();
    if m == 0 {
        return EqualitySplit {
            range: DMatrix::zeros(n, 0),
            null: DMatrix::identity(n, n),
            particular: DVector::zeros(n),
            rank_deficient: false,
        };
    }
    // Pad to at least n rows so the decomposition yields a full V.
    let rows = m.max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.rows_mut(0, m).copy_from(a);
    let mut b_pad = DVector::zeros(rows);
    b_pad.rows_mut(0, m).copy_from(b);
    let svd = padded.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| smax > 0.0 && sv[i] > rank_tol * smax)
        .collect();
    let drop: Vec<usize> = (0..sv.len()).filter(|i| !keep.contains(i)).collect();

    let mut range = DMatrix::zeros(n, keep.len());
    let mut particular = DVector::zeros(n);
    for (c, &i) in keep.iter().enumerate() {
        let v = v_t.row(i).transpose();
        let coef = u.column(i).dot(&b_pad) / sv[i];
        particular += &v * coef;
        range.set_column(c, &v);
    }
    let mut null = DMatrix::zeros(n, drop.len());
    for (c, &i) in drop.iter().enumerate() {
        null.set_column(c, &v_t.row(i).transpose());
    }
    EqualitySplit {
        range,
        null,
        particular,
        rank_deficient: keep.len() < m,
    }
}

struct DualActiveSet {
    y: DVector<f64>,
    active: Vec<usize>,
    /// Multiplier per active entry.
    u: Vec<f64>,
    status: QpStatus,
    iterations: usize,
}

/// Goldfarb-Idnani on `min 1/2 y'Gy + g'y  s.t.  c_i . y >= d_i`.
fn dual_active_set(
    g_mat: &DMatrix<f64>,
    g_vec: &DVector<f64>,
    normals: &[DVector<f64>],
    rhs: &[f64],
    settings: &QpSettings,
) -> DualActiveSet {
    let k = g_vec.len();
    let g_inv = g_mat
        .clone()
        .cholesky()
        .expect("reduced hessian is positive definite")
        .inverse();
    let mut y = -(&g_inv * g_vec);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;

    // Rows with no reach into the reduced space are constants.
    let mut usable = alloc::vec![true; normals.len()];
    for (i, c) in normals.iter().enumerate() {
        if c.norm() <= 1e-12 {
            usable[i] = false;
            if -rhs[i] < -settings.tol_feas {
                return DualActiveSet {
                    y,
                    active,
                    u,
                    status: QpStatus::Infeasible,
                    iterations,
                };
            }
        }
    }

    let slack = |y: &DVector<f64>, i: usize| normals[i].dot(y) - rhs[i];

    loop {
        // Most violated row, scaled by its normal; first index wins ties.
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..normals.len() {
            if !usable[i] || active.contains(&i) {
                continue;
            }
            let s = slack(&y, i);
            if s < -settings.tol_feas {
                let scaled = s / normals[i].norm();
                if pick.is_none_or(|(_, best)| scaled < best) {
                    pick = Some((i, scaled));
                }
            }
        }
        let Some((p, _)) = pick else {
            return DualActiveSet {
                y,
                active,
                u,
                status: QpStatus::Optimal,
                iterations,
            };
        };
        let n_p = &normals[p];
        let mut u_p = 0.0;
        let unprojected = n_p.dot(&(&g_inv * n_p));

        loop {
            if iterations >= settings.max_iter {
                return DualActiveSet {
                    y,
                    active,
                    u,
                    status: QpStatus::MaxIter,
                    iterations,
                };
            }
            iterations += 1;

            let g_inv_np = &g_inv * n_p;
            let (z, r) = if active.is_empty() {
                (g_inv_np, DVector::zeros(0))
            } else {
                let mut n_act = DMatrix::zeros(k, active.len());
                for (c, &i) in active.iter().enumerate() {
                    n_act.set_column(c, &normals[i]);
                }
                let w = &g_inv * &n_act;
                let m = n_act.transpose() * &w;
                let r = m
                    .cholesky()
                    .map(|ch| ch.solve(&(w.transpose() * n_p)))
                    .unwrap_or_else(|| DVector::zeros(active.len()));
                (g_inv_np - w * &r, r)
            };

            // Largest dual step before an active multiplier hits zero.
            let mut t1: Option<(usize, f64)> = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let t = u[j] / rj;
                    if t1.is_none_or(|(_, best)| t < best) {
                        t1 = Some((j, t));
                    }
                }
            }

            let curvature = z.dot(n_p);
            if curvature <= 1e-12 * unprojected {
                // n_p is in the span of the active normals: only the dual moves.
                let Some((l, t)) = t1 else {
                    return DualActiveSet {
                        y,
                        active,
                        u,
                        status: QpStatus::Infeasible,
                        iterations,
                    };
                };
                for (j, rj) in r.iter().enumerate() {
                    u[j] -= t * rj;
                }
                u_p += t;
                active.remove(l);
                u.remove(l);
                continue;
            }

            let t2 = -slack(&y, p) / curvature;
            let (t, full) = match t1 {
                Some((_, t1v)) if t1v < t2 => (t1v, false),
                _ => (t2, true),
            };
            y += &z * t;
            for (j, rj) in r.iter().enumerate() {
                u[j] -= t * rj;
            }
            u_p += t;
            if full {
                active.push(p);
                u.push(u_p);
                break;
            }
            let (l, _) = t1.expect("partial step has a blocking row");
            active.remove(l);
            u.remove(l);
        }
    }
}

pub fn solve(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let h = &problem.hessian;
    let f = &problem.linear;

    let split = split_equalities(&problem.eq_matrix, &problem.eq_rhs, settings.rank_tol);
    let rows = collect_rows(problem);
    let z = &split.null;
    let x_p = &split.particular;

    let (x, status, iterations, active, u) = if z.ncols() == 0 {
        let feasible = rows
            .iter()
            .all(|r| !r.rhs.is_finite() || r.normal.dot(x_p) - r.rhs >= -settings.tol_feas);
        let status = if feasible {
            QpStatus::Optimal
        } else {
            QpStatus::Infeasible
        };
        (x_p.clone(), status, 0, Vec::new(), Vec::new())
    } else {
        let g_mat = z.transpose() * h * z;
        let g_mat = (&g_mat + g_mat.transpose()) * 0.5;
        let g_vec = z.transpose() * (h * x_p + f);
        let mut normals = Vec::with_capacity(rows.len());
        let mut rhs = Vec::with_capacity(rows.len());
        let mut index = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                continue;
            }
            normals.push(z.transpose() * &r.normal);
            rhs.push(r.rhs - r.normal.dot(x_p));
            index.push(i);
        }
        let sol = dual_active_set(&g_mat, &g_vec, &normals, &rhs, settings);
        let x = x_p + z * &sol.y;
        let active = sol.active.iter().map(|&a| index[a]).collect();
        (x, sol.status, sol.iterations, active, sol.u)
    };

    // Multipliers and residuals in the original space.
    let mut multipliers = DVector::zeros(rows.len());
    for (&a, &ua) in active.iter().zip(u.iter()) {
        multipliers[a] = ua;
    }
    let mut reduced_grad = h * &x + f;
    for (i, r) in rows.iter().enumerate() {
        if multipliers[i] != 0.0 {
            reduced_grad -= &r.normal * multipliers[i];
        }
    }
    let range = &split.range;
    let eq_dual_range = range.transpose() * &reduced_grad;
    let stationarity = (&reduced_grad - range * &eq_dual_range).amax();

    let mut primal: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for (i, r) in rows.iter().enumerate() {
        if !r.rhs.is_finite() {
            continue;
        }
        let s = r.normal.dot(&x) - r.rhs;
        primal = primal.max(-s);
        complementarity = complementarity.max((multipliers[i] * s).abs());
    }
    let projected_eq = if range.ncols() > 0 {
        (range.transpose() * (&x - x_p)).amax()
    } else {
        0.0
    };
    let kkt_residual = stationarity
        .max(complementarity)
        .max(primal)
        .max(projected_eq);
    let eq_residual = if problem.eq_matrix.nrows() > 0 {
        (&problem.eq_matrix * &x - &problem.eq_rhs).amax()
    } else {
        0.0
    };

    // Equality multipliers for the original rows (minimum-norm).
    let eq_multipliers = if problem.eq_matrix.nrows() > 0 {
        let at = problem.eq_matrix.transpose();
        let target = range * &eq_dual_range;
        at.svd(true, true)
            .solve(&target, settings.rank_tol)
            .unwrap_or_else(|_| DVector::zeros(problem.eq_matrix.nrows()))
    } else {
        DVector::zeros(0)
    };

    Ok(QpSolution {
        x,
        status,
        kkt_residual,
        eq_residual,
        iterations,
        rank_deficient: split.rank_deficient,
        multipliers,
        eq_multipliers,
    })
}
