mod common;

use icop::{
    body_point_jacobian, body_point_position, forward_kinematics, BodyPoint, JointConfig,
    RobotChain,
};
use nalgebra::{Matrix3, Point3, Vector6};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = JointConfig> {
    prop::array::uniform6(-3.1f64..3.1).prop_map(JointConfig::from)
}

fn body_point() -> impl Strategy<Value = BodyPoint> {
    (0usize..=6, prop::array::uniform3(-0.5f64..0.5))
        .prop_map(|(link, p)| BodyPoint::new(link, Point3::from(p)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn jacobian_matches_central_differences(q in config(), p in body_point()) {
        let chain = RobotChain::gp50();
        let jac = body_point_jacobian(&q, &chain, &p);
        let h = 1e-6;
        for j in 0..6 {
            let mut dq = Vector6::zeros();
            dq[j] = h;
            let fd = (body_point_position(&(q + dq), &chain, &p) - body_point_position(&(q - dq), &chain, &p)) / (2.0 * h);
            prop_assert!((fd - jac.column(j)).amax() < 1e-6, "column {}", j);
        }
    }

    #[test]
    fn linearization_remainder_is_second_order(q in config(), p in body_point(), dir in prop::array::uniform6(-1.0f64..1.0)) {
        let chain = RobotChain::gp50();
        let dir = Vector6::from(dir);
        prop_assume!(dir.norm() > 0.1);
        let dir = dir.normalize();
        let jac = body_point_jacobian(&q, &chain, &p);
        let c0 = body_point_position(&q, &chain, &p);
        for h in [1e-2, 1e-3] {
            let remainder = (body_point_position(&(q + dir * h), &chain, &p) - c0 - jac * dir * h).norm();
            // Second derivatives of a ~3 m arm are bounded by a few meters.
            prop_assert!(remainder <= 10.0 * h * h, "h {} remainder {}", h, remainder);
        }
    }

    #[test]
    fn frames_are_proper_rigid_motions(q in config()) {
        for f in forward_kinematics(&q, &RobotChain::gp50()) {
            let r: Matrix3<f64> = *f.rotation.matrix();
            prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rebasing_moves_every_frame(q in config(), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let motion = common::random_isometry(&mut rng);
        let chain = RobotChain::gp50();
        let moved = forward_kinematics(&q, &chain.rebased(&motion));
        let motion_m = nalgebra::IsometryMatrix3::from_parts(motion.translation, motion.rotation.to_rotation_matrix());
        for (a, b) in forward_kinematics(&q, &chain).iter().zip(moved.iter()) {
            let expect = motion_m * a;
            prop_assert!((expect.to_homogeneous() - b.to_homogeneous()).amax() < 1e-12);
        }
    }
}

#[test]
fn jacobian_is_independent_of_distal_joints() {
    let chain = RobotChain::gp50();
    let mut rng = common::rng(3);
    for _ in 0..50 {
        let q = common::random_config(&mut rng);
        let p = BodyPoint::new(2, Point3::new(0.1, 0.2, -0.1));
        let mut q2 = q;
        q2[3] += 0.7;
        q2[5] -= 1.1;
        assert_eq!(
            body_point_position(&q, &chain, &p),
            body_point_position(&q2, &chain, &p)
        );
        assert_eq!(
            body_point_jacobian(&q, &chain, &p),
            body_point_jacobian(&q2, &chain, &p)
        );
    }
}
