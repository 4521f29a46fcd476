use nalgebra::{Matrix4, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermoact::kinematics::{
    forward_kinematics, jacobian, solve_ik, ArmModel, JointVector, KinematicsError,
};

fn rot(axis: char, a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    match axis {
        'x' => Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0),
        'y' => Matrix4::new(c, 0.0, s, 0.0, 0.0, 1.0, 0.0, 0.0, -s, 0.0, c, 0.0, 0.0, 0.0, 0.0, 1.0),
        _ => Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
    }
}

fn tz(d: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(2, 3)] = d;
    m
}

/// Plain 4x4 homogeneous product, written independently of the library chain.
fn oracle_fk(q: &[f64; 6]) -> Vector3<f64> {
    let t = rot('z', q[0])
        * tz(0.13)
        * rot('y', q[1])
        * tz(0.28)
        * rot('y', q[2])
        * tz(0.28)
        * rot('y', q[3])
        * rot('x', q[4])
        * rot('y', q[5])
        * tz(0.13);
    Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
}

fn random_q(rng: &mut ChaCha8Rng) -> JointVector {
    JointVector(std::array::from_fn(|_| rng.random_range(-2.6..=2.6)))
}

#[test]
fn fk_matches_homogeneous_oracle() {
    let m = ArmModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let q = random_q(&mut rng);
        let p = forward_kinematics(&m, &q).unwrap();
        assert!((p - oracle_fk(&q.0)).norm() < 1e-9, "{q:?}");
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let m = ArmModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // Keep a margin so the difference stencil stays inside the limits.
        let q = JointVector(std::array::from_fn(|_| rng.random_range(-2.5..=2.5)));
        let j = jacobian(&m, &q).unwrap();
        for i in 0..6 {
            let mut plus = q.0;
            let mut minus = q.0;
            plus[i] += h;
            minus[i] -= h;
            let col = (oracle_fk(&plus) - oracle_fk(&minus)) / (2.0 * h);
            worst = worst.max((j.column(i) - col).amax());
            assert!(j.column(i).norm() <= 0.69 + 1e-12);
        }
    }
    assert!(worst < 1e-5, "max abs diff {worst}");
}

#[test]
fn ik_succeeds_on_random_reachable_targets() {
    let m = ArmModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let shoulder = m.shoulder();
    let (r_min, r_max) = (m.min_reach(), m.reach());
    let mut ok = 0;
    let mut tried = 0;
    while tried < 100 {
        // Uniform in the spherical shell around the shoulder.
        let dir: Vector3<f64> = loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let u: f64 = rng.random();
        let r = (r_min.powi(3) + u * (r_max.powi(3) - r_min.powi(3))).cbrt();
        let target = shoulder + dir * r;
        if target.z <= 0.02 {
            continue;
        }
        tried += 1;
        if let Ok(q) = solve_ik(&m, &target, &JointVector::zeros()) {
            m.check_limits(&q).unwrap();
            if (oracle_fk(&q.0) - target).norm() < 1e-3 {
                ok += 1;
            }
        }
    }
    assert!(ok >= 99, "{ok}/100 converged");
}

#[test]
fn ik_far_target_is_domain_error() {
    let m = ArmModel::default();
    let target = m.shoulder() + Vector3::new(0.0, 0.75, 0.0);
    let err = solve_ik(&m, &target, &JointVector::zeros()).unwrap_err();
    assert!(matches!(err, KinematicsError::OutOfReach { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn ik_result_within_limits(seed in any::<u64>()) {
        let m = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = forward_kinematics(&m, &random_q(&mut rng)).unwrap();
        let start = random_q(&mut rng);
        if let Ok(q) = solve_ik(&m, &target, &start) {
            prop_assert!(m.check_limits(&q).is_ok());
            prop_assert!((forward_kinematics(&m, &q).unwrap() - target).norm() < 1e-3);
        }
    }
}
