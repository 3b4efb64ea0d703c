//! First-order linearization of body-point position constraints.

use alloc::vec::Vec;

use nalgebra::{DVector, Dyn, OMatrix, Point3, U6};

use crate::kinematics::{BodyPoint, ChainPose, JointConfig, RobotChain};

/// Row-stacked 6-column matrix.
pub type RowsX6 = OMatrix<f64, Dyn, U6>;

/// `matrix * q = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEquality {
    pub matrix: RowsX6,
    pub rhs: DVector<f64>,
    /// The matrix lost rank (kinematic singularity). The QP falls back to the
    /// least-squares-consistent part of the constraint.
    pub singular: bool,
}

impl LinearEquality {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn residual(&self, q: &JointConfig) -> DVector<f64> {
        &self.matrix * q - &self.rhs
    }
}

const SINGULAR_TOL: f64 = 1e-9;

fn is_rank_deficient(m: &RowsX6) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    max <= 0.0 || sv.iter().take(m.nrows()).any(|s| *s <= SINGULAR_TOL * max)
}

/// Linearizes `position(point) = c_next` around `q_ref`, where `c_ref` is
/// the point's position at `q_ref`. The remainder term is dropped; the
/// caller re-linearizes until the true residual is small enough.
pub fn linearize_task(
    q_ref: &JointConfig,
    c_ref: &Point3<f64>,
    c_next: &Point3<f64>,
    chain: &RobotChain,
    tool: &BodyPoint,
) -> LinearEquality {
    let jac = ChainPose::new(chain, q_ref).jacobian(tool);
    let rhs = jac * q_ref + (c_next - c_ref);
    let matrix = RowsX6::from_fn(3, |r, c| jac[(r, c)]);
    let singular = is_rank_deficient(&matrix);
    LinearEquality {
        matrix,
        rhs: DVector::from_column_slice(rhs.as_slice()),
        singular,
    }
}

/// Stacks one three-row block per `(point, target)` pair, using the true
/// positions at `q_ref` as the linearization points.
pub fn linearize_contacts(
    q_ref: &JointConfig,
    chain: &RobotChain,
    contacts: &[(BodyPoint, Point3<f64>)],
) -> LinearEquality {
    let pose = ChainPose::new(chain, q_ref);
    let mut rows: Vec<f64> = Vec::with_capacity(contacts.len() * 18);
    let mut rhs: Vec<f64> = Vec::with_capacity(contacts.len() * 3);
    for (point, target) in contacts {
        let jac = pose.jacobian(point);
        let current = pose.point(point);
        let b = jac * q_ref + (target - current);
        for r in 0..3 {
            rows.extend(jac.row(r).iter());
            rhs.push(b[r]);
        }
    }
    let matrix = RowsX6::from_row_slice(&rows);
    let singular = is_rank_deficient(&matrix);
    LinearEquality {
        matrix,
        rhs: DVector::from_vec(rhs),
        singular,
    }
}
