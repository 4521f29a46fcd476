//! Pinhole cameras. The camera looks along its local +z; image x runs along
//! local +x and image y (downwards) along local +y.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::thermal::{SENSOR_HEIGHT, SENSOR_WIDTH};

pub const RGB_WIDTH: usize = 640;
pub const RGB_HEIGHT: usize = 480;
pub const DEFAULT_HFOV_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraId {
    External,
    Wrist,
}

impl CameraId {
    pub fn name(self) -> &'static str {
        match self {
            CameraId::External => "external",
            CameraId::Wrist => "wrist",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub pose: Isometry3<f64>,
    pub hfov_deg: f64,
    pub thermal_resolution: (usize, usize),
    pub rgb_resolution: (usize, usize),
}

impl CameraModel {
    pub fn new(pose: Isometry3<f64>) -> Self {
        Self {
            pose,
            hfov_deg: DEFAULT_HFOV_DEG,
            thermal_resolution: (SENSOR_WIDTH, SENSOR_HEIGHT),
            rgb_resolution: (RGB_WIDTH, RGB_HEIGHT),
        }
    }

    /// Camera at `eye` aimed at `target`, image-up roughly along `up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        // nalgebra's face_towards points local +z at the target with local +y along `up`;
        // image rows grow downwards, so flip y (and x to stay right-handed).
        let face = Isometry3::face_towards(&Point3::from(eye), &Point3::from(target), &up);
        let flip = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
        Self::new(face * flip)
    }

    pub fn is_valid(&self) -> bool {
        self.hfov_deg > 0.0
            && self.hfov_deg < 180.0
            && self.thermal_resolution.0 > 0
            && self.thermal_resolution.1 > 0
            && self.rgb_resolution.0 > 0
            && self.rgb_resolution.1 > 0
    }

    /// Unit world-frame ray through the center of pixel (u, v) at the given resolution.
    pub fn ray(&self, u: usize, v: usize, (w, h): (usize, usize)) -> (Vector3<f64>, Vector3<f64>) {
        let f = (w as f64 / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan();
        let local = Vector3::new(
            (u as f64 + 0.5 - w as f64 / 2.0) / f,
            (v as f64 + 0.5 - h as f64 / 2.0) / f,
            1.0,
        );
        (self.pose.translation.vector, (self.pose.rotation * local).normalize())
    }

    /// Projects a world point to continuous pixel coordinates, if in front of the camera.
    pub fn project(&self, p: &Vector3<f64>, (w, h): (usize, usize)) -> Option<(f64, f64)> {
        let local = self.pose.inverse_transform_point(&Point3::from(*p));
        if local.z <= 0.0 {
            return None;
        }
        let f = (w as f64 / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan();
        Some((
            local.x / local.z * f + w as f64 / 2.0,
            local.y / local.z * f + h as f64 / 2.0,
        ))
    }
}

/// Fixed overhead-oblique view from across the table, facing the robot.
pub fn default_external_camera() -> CameraModel {
    CameraModel::look_at(
        Vector3::new(0.95, 0.0, 0.75),
        Vector3::new(0.32, 0.0, 0.0),
        Vector3::z(),
    )
}

/// Wrist camera mount relative to the tool frame: a little behind the tool tip,
/// looking along the tool axis.
pub fn wrist_mount() -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(-0.04, 0.0, -0.10), UnitQuaternion::identity())
}

pub fn wrist_camera(tool_pose: &Isometry3<f64>) -> CameraModel {
    CameraModel::new(tool_pose * wrist_mount())
}
