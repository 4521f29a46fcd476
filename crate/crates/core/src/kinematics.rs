//! Forward kinematics, Jacobian and damped-least-squares IK for the
//! simulated 6-joint arm.
//!
//! The chain is fixed: base yaw about z, three pitch joints about y separated
//! by the upper links, a wrist roll about x, a final pitch about y, and the
//! tool link. With every angle at zero all links stack along +z.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix3x6, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub const NUM_JOINTS: usize = 6;
pub const DEFAULT_JOINT_LIMIT: f64 = 2.6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("joint {joint} at {value:.4} rad violates limits [{lo}, {hi}]")]
    JointLimit {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("target at {distance:.4} m from the shoulder is outside the reach annulus [{min:.3}, {max:.3}]")]
    OutOfReach { distance: f64, min: f64, max: f64 },
    #[error("IK did not converge after {iterations} iterations (residual {residual:.2e} m)")]
    Unreachable { iterations: usize, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// Six joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; NUM_JOINTS]);

impl JointVector {
    pub fn zeros() -> Self {
        Self([0.0; NUM_JOINTS])
    }

    pub fn as_array(&self) -> &[f64; NUM_JOINTS] {
        &self.0
    }

    fn to_dvector(self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl From<[f64; NUM_JOINTS]> for JointVector {
    fn from(q: [f64; NUM_JOINTS]) -> Self {
        Self(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    /// L1..L4 in meters: base-to-shoulder, upper arm, forearm, tool.
    pub link_lengths: [f64; 4],
    pub axes: [Axis; NUM_JOINTS],
    pub joint_limits: [(f64, f64); NUM_JOINTS],
    /// rad/s, applied per joint.
    pub max_joint_speed: f64,
}

impl Default for ArmModel {
    fn default() -> Self {
        Self {
            link_lengths: [0.13, 0.28, 0.28, 0.13],
            axes: [Axis::Z, Axis::Y, Axis::Y, Axis::Y, Axis::X, Axis::Y],
            joint_limits: [(-DEFAULT_JOINT_LIMIT, DEFAULT_JOINT_LIMIT); NUM_JOINTS],
            max_joint_speed: 1.5,
        }
    }
}

impl ArmModel {
    pub fn new(
        link_lengths: [f64; 4],
        joint_limits: [(f64, f64); NUM_JOINTS],
        max_joint_speed: f64,
    ) -> Result<Self, KinematicsError> {
        if link_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(KinematicsError::InvalidInput(
                "link lengths must be positive".into(),
            ));
        }
        if joint_limits.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(KinematicsError::InvalidInput(
                "joint limits must satisfy lo < hi".into(),
            ));
        }
        Ok(Self {
            link_lengths,
            joint_limits,
            max_joint_speed,
            ..Self::default()
        })
    }

    /// Distance the tool can reach from the shoulder joint.
    pub fn reach(&self) -> f64 {
        self.link_lengths[1] + self.link_lengths[2] + self.link_lengths[3]
    }

    /// Inner radius of the workspace annulus; closer targets fold the arm onto itself.
    pub fn min_reach(&self) -> f64 {
        0.05
    }

    pub fn shoulder(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.link_lengths[0])
    }

    /// Offset along local z travelled before each joint.
    fn joint_offsets(&self) -> [f64; NUM_JOINTS] {
        let [l1, l2, l3, _] = self.link_lengths;
        [0.0, l1, l2, l3, 0.0, 0.0]
    }

    pub fn check_limits(&self, q: &JointVector) -> Result<(), KinematicsError> {
        for (joint, (&value, &(lo, hi))) in q.0.iter().zip(&self.joint_limits).enumerate() {
            if !value.is_finite() || value < lo || value > hi {
                return Err(KinematicsError::JointLimit { joint, value, lo, hi });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &JointVector) -> JointVector {
        let mut out = q.0;
        for (v, &(lo, hi)) in out.iter_mut().zip(&self.joint_limits) {
            *v = v.clamp(lo, hi);
        }
        JointVector(out)
    }

    /// Joint frames (origin, world axis) followed by the tool pose.
    fn chain(&self, q: &JointVector) -> ([(Vector3<f64>, Vector3<f64>); NUM_JOINTS], Isometry3<f64>) {
        let offsets = self.joint_offsets();
        let mut pose = Isometry3::identity();
        let mut frames = [(Vector3::zeros(), Vector3::zeros()); NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            pose *= Translation3::new(0.0, 0.0, offsets[i]);
            let axis = self.axes[i].unit();
            frames[i] = (pose.translation.vector, pose.rotation * axis);
            pose *= UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis), q.0[i]);
        }
        pose *= Translation3::new(0.0, 0.0, self.link_lengths[3]);
        (frames, pose)
    }
}

/// Full tool pose (position plus orientation); local +z points along the tool.
pub fn tool_pose(model: &ArmModel, q: &JointVector) -> Result<Isometry3<f64>, KinematicsError> {
    model.check_limits(q)?;
    Ok(model.chain(q).1)
}

pub fn forward_kinematics(model: &ArmModel, q: &JointVector) -> Result<Vector3<f64>, KinematicsError> {
    Ok(tool_pose(model, q)?.translation.vector)
}

/// Analytic positional Jacobian: column i is axis_i × (tool − origin_i).
pub fn jacobian(model: &ArmModel, q: &JointVector) -> Result<Matrix3x6<f64>, KinematicsError> {
    model.check_limits(q)?;
    Ok(jacobian_unchecked(model, q))
}

fn jacobian_unchecked(model: &ArmModel, q: &JointVector) -> Matrix3x6<f64> {
    let (frames, tool) = model.chain(q);
    let p = tool.translation.vector;
    let mut j = Matrix3x6::zeros();
    for (i, (origin, axis)) in frames.iter().enumerate() {
        j.set_column(i, &axis.cross(&(p - origin)));
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub damping: f64,
    pub max_step: f64,
    pub tolerance: f64,
    /// Residual still accepted when the iteration budget runs out.
    pub acceptance: f64,
    pub max_iterations: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_step: 0.2,
            tolerance: 1e-4,
            acceptance: 1e-3,
            max_iterations: 200,
        }
    }
}

/// Damped least-squares iteration shared by the IK variants.
///
/// `residual` maps the free variables to (target − current); `jac` returns the
/// 3×n derivative of the current position with respect to them. `project`
/// enforces limits after every step.
fn dls_iterate(
    mut x: DVector<f64>,
    cfg: &IkConfig,
    residual: impl Fn(&DVector<f64>) -> Vector3<f64>,
    jac: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    project: impl Fn(&mut DVector<f64>),
) -> Result<DVector<f64>, KinematicsError> {
    let damping = Matrix3::identity() * cfg.damping * cfg.damping;
    for _ in 0..cfg.max_iterations {
        let e = residual(&x);
        if e.norm() < cfg.tolerance {
            return Ok(x);
        }
        let j = jac(&x);
        let jjt: Matrix3<f64> = (&j * j.transpose()).fixed_view::<3, 3>(0, 0).into_owned() + damping;
        let Some(inv) = jjt.try_inverse() else {
            break;
        };
        let mut dq = j.transpose() * (inv * e);
        let largest = dq.amax();
        if largest > cfg.max_step {
            dq *= cfg.max_step / largest;
        }
        x += dq;
        project(&mut x);
    }
    let residual = residual(&x).norm();
    if residual < cfg.acceptance {
        Ok(x)
    } else {
        Err(KinematicsError::Unreachable {
            iterations: cfg.max_iterations,
            residual,
        })
    }
}

fn check_target(model: &ArmModel, target: &Vector3<f64>) -> Result<(), KinematicsError> {
    if !target.iter().all(|v| v.is_finite()) {
        return Err(KinematicsError::InvalidInput("non-finite target".into()));
    }
    let distance = (target - model.shoulder()).norm();
    if distance > model.reach() || distance < model.min_reach() {
        return Err(KinematicsError::OutOfReach {
            distance,
            min: model.min_reach(),
            max: model.reach(),
        });
    }
    Ok(())
}

/// Position-only IK over all six joints.
pub fn solve_ik(
    model: &ArmModel,
    target: &Vector3<f64>,
    seed: &JointVector,
) -> Result<JointVector, KinematicsError> {
    solve_ik_with(model, target, seed, &IkConfig::default())
}

pub fn solve_ik_with(
    model: &ArmModel,
    target: &Vector3<f64>,
    seed: &JointVector,
    cfg: &IkConfig,
) -> Result<JointVector, KinematicsError> {
    model.check_limits(seed)?;
    check_target(model, target)?;
    let to_joints = |x: &DVector<f64>| {
        let mut q = [0.0; NUM_JOINTS];
        q.copy_from_slice(x.as_slice());
        JointVector(q)
    };
    let x = dls_iterate(
        seed.to_dvector(),
        cfg,
        |x| target - model.chain(&to_joints(x)).1.translation.vector,
        |x| {
            let j = jacobian_unchecked(model, &to_joints(x));
            DMatrix::from_column_slice(3, NUM_JOINTS, j.as_slice())
        },
        |x| {
            for (v, &(lo, hi)) in x.iter_mut().zip(&model.joint_limits) {
                *v = v.clamp(lo, hi);
            }
        },
    )?;
    let q = to_joints(&x);
    debug_assert!(model.check_limits(&q).is_ok());
    Ok(q)
}

/// Joint vector with the tool pointing straight down, tilted by `tilt` about the
/// last pitch joint, for the given yaw/shoulder/elbow.
fn tool_down_joints(q1: f64, q2: f64, q3: f64, tilt: f64) -> JointVector {
    JointVector([q1, q2, q3, std::f64::consts::PI - q2 - q3, 0.0, tilt])
}

/// Position IK that keeps the tool vertical (pointing at the table) while
/// optionally pitching the last joint by `tilt`.
///
/// Only yaw, shoulder and elbow are free; the wrist pitch is slaved so the
/// pitch joints sum to π and the roll stays at zero.
pub fn solve_ik_tool_down(
    model: &ArmModel,
    target: &Vector3<f64>,
    seed: &JointVector,
    tilt: f64,
) -> Result<JointVector, KinematicsError> {
    check_target(model, target)?;
    let cfg = IkConfig::default();
    let lim = model.joint_limits;
    let x0 = DVector::from_column_slice(&[
        seed.0[0].clamp(lim[0].0, lim[0].1),
        seed.0[1].clamp(lim[1].0, lim[1].1),
        seed.0[2].clamp(lim[2].0, lim[2].1),
    ]);
    let joints = |x: &DVector<f64>| tool_down_joints(x[0], x[1], x[2], tilt);
    let x = dls_iterate(
        x0,
        &cfg,
        |x| target - model.chain(&joints(x)).1.translation.vector,
        |x| {
            let j = jacobian_unchecked(model, &joints(x));
            let mut reduced = DMatrix::zeros(3, 3);
            reduced.set_column(0, &j.column(0));
            reduced.set_column(1, &(j.column(1) - j.column(3)));
            reduced.set_column(2, &(j.column(2) - j.column(3)));
            reduced
        },
        |x| {
            for i in 0..3 {
                x[i] = x[i].clamp(lim[i].0, lim[i].1);
            }
        },
    )?;
    let q = joints(&x);
    model.check_limits(&q)?;
    Ok(q)
}

/// Angle in radians between the tool axis and straight down.
pub fn tool_tilt(pose: &Isometry3<f64>) -> f64 {
    let axis = pose.rotation * Vector3::z();
    axis.dot(&-Vector3::z()).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_pose_stacks_links() {
        let m = ArmModel::default();
        let p = forward_kinematics(&m, &JointVector::zeros()).unwrap();
        assert!((p - Vector3::new(0.0, 0.0, 0.82)).norm() < 1e-12);
    }

    #[test]
    fn shoulder_pitch_lays_arm_along_x() {
        let m = ArmModel::default();
        let q = JointVector([0.0, FRAC_PI_2, 0.0, 0.0, 0.0, 0.0]);
        let p = forward_kinematics(&m, &q).unwrap();
        assert!((p - Vector3::new(0.69, 0.0, 0.13)).norm() < 1e-12);
    }

    #[test]
    fn limit_violation_is_domain_error() {
        let m = ArmModel::default();
        let q = JointVector([0.0, 2.7, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            forward_kinematics(&m, &q),
            Err(KinematicsError::JointLimit { joint: 1, .. })
        ));
        assert!(jacobian(&m, &q).is_err());
    }

    #[test]
    fn yaw_column_vanishes_on_axis() {
        let m = ArmModel::default();
        let j = jacobian(&m, &JointVector::zeros()).unwrap();
        assert_eq!(j.column(0).norm(), 0.0);
    }

    #[test]
    fn ik_fixed_point() {
        let m = ArmModel::default();
        let seed = JointVector([0.3, 0.4, 0.9, 0.5, -0.2, 0.1]);
        let target = forward_kinematics(&m, &seed).unwrap();
        assert_eq!(solve_ik(&m, &target, &seed).unwrap(), seed);
    }

    #[test]
    fn ik_reaches_example_target() {
        let m = ArmModel::default();
        let target = Vector3::new(0.3, 0.0, 0.4);
        let q = solve_ik(&m, &target, &JointVector::zeros()).unwrap();
        let p = forward_kinematics(&m, &q).unwrap();
        assert!((p - target).norm() < 1e-3);
    }

    #[test]
    fn ik_rejects_beyond_reach() {
        let m = ArmModel::default();
        let target = m.shoulder() + Vector3::new(0.75, 0.0, 0.0);
        assert!(matches!(
            solve_ik(&m, &target, &JointVector::zeros()),
            Err(KinematicsError::OutOfReach { .. })
        ));
    }

    #[test]
    fn tool_down_ik_points_down() {
        let m = ArmModel::default();
        let seed = JointVector([0.0, 0.1, 1.5, 1.5, 0.0, 0.0]);
        for target in [
            Vector3::new(0.3, 0.0, 0.25),
            Vector3::new(0.42, -0.2, 0.02),
            Vector3::new(0.22, 0.2, 0.1),
        ] {
            let q = solve_ik_tool_down(&m, &target, &seed, 0.0).unwrap();
            let pose = tool_pose(&m, &q).unwrap();
            assert!((pose.translation.vector - target).norm() < 1e-3);
            assert!(tool_tilt(&pose) < 1e-9);
        }
        let q = solve_ik_tool_down(&m, &Vector3::new(0.35, 0.1, 0.15), &seed, 0.9).unwrap();
        let pose = tool_pose(&m, &q).unwrap();
        assert!((tool_tilt(&pose) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn model_validation() {
        assert!(ArmModel::new([0.1, 0.0, 0.2, 0.1], [(-1.0, 1.0); 6], 1.0).is_err());
        assert!(ArmModel::new([0.1, 0.2, 0.2, 0.1], [(1.0, -1.0); 6], 1.0).is_err());
        let m = ArmModel::default();
        assert!((m.reach() - 0.69).abs() < 1e-12);
    }
}
