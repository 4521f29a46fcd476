//! Executor layer: observations, actions and the policies mapping one to the
//! other at the 10 Hz control rate.

mod flat;
mod remote;
mod resolve;
mod scripted;

use std::fmt;
use std::str::FromStr;

use image::imageops::FilterType;
use image::RgbImage;
use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::KinematicsError;
use crate::sim::{render_rgb, render_thermal, InteractionKind, ObjectClass, Scene, Shape};
use crate::thermal::{thermal_to_pseudocolor, InfernoPalette, PseudocolorImage, TempRange};

pub use crate::sim::Action;
pub use flat::{flat_phases, FlatPolicy, DEFAULT_FLAT_SIGMA};
pub use remote::{RemotePolicy, RemotePolicyConfig};
pub use resolve::{acceptable_targets, resolve_target, Selector, TIE_TOLERANCE_C};
pub use scripted::{place_point, ScriptedPolicy, Step, StepTarget};

pub const DONE_THRESHOLD: f64 = 0.5;
/// Side length of images at model input.
pub const MODEL_IMAGE_SIZE: u32 = 256;

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("no object matches {0:?}")]
    Resolution(String),
    #[error("policy cannot handle prompt {prompt:?}: {reason}")]
    Prompt { prompt: String, reason: String },
    #[error("invalid observation: {0}")]
    Observation(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed policy response: {0}")]
    Format(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Input-modality configuration of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Flat end-to-end policy, thermal external view, no decomposition.
    #[serde(rename = "FLAT")]
    Flat,
    /// RGB on both cameras: no temperature information.
    #[serde(rename = "RGB_RGB")]
    RgbRgb,
    /// Thermal pseudocolor external view plus wrist RGB.
    #[serde(rename = "RGBT")]
    Rgbt,
}

impl Condition {
    /// Report column order.
    pub const ALL: [Condition; 3] = [Condition::Flat, Condition::RgbRgb, Condition::Rgbt];

    pub fn sees_temperature(self) -> bool {
        self != Condition::RgbRgb
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Flat => "FLAT",
            Condition::RgbRgb => "RGB_RGB",
            Condition::Rgbt => "RGBT",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rgbt" | "rgb-t" => Ok(Condition::Rgbt),
            "rgb-rgb" => Ok(Condition::RgbRgb),
            "flat" => Ok(Condition::Flat),
            other => Err(format!("unknown condition {other:?} (rgbt, rgb-rgb, flat)")),
        }
    }
}

/// What a policy may know about one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: String,
    pub class: ObjectClass,
    pub appearance: String,
    pub shape: Shape,
    pub position: Vector3<f64>,
    pub yaw: f64,
    /// Measured surface temperature; ambient for every object when the
    /// condition has no thermal channel.
    pub temperature: f64,
    /// Hidden (None) without a thermal channel.
    pub powered: Option<bool>,
    pub contents: Vec<ObjectClass>,
    pub interaction: Option<(InteractionKind, Vector3<f64>)>,
    pub attached: bool,
}

impl ObjectView {
    pub fn top(&self) -> f64 {
        self.position.z + self.shape.half_height()
    }
}

/// Scene as exposed to policies, gated by condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub ambient: f64,
    pub tool_pose: Isometry3<f64>,
    pub objects: Vec<ObjectView>,
}

impl SceneView {
    pub fn new(scene: &Scene, condition: Condition) -> Self {
        let thermal = condition.sees_temperature();
        let objects = scene
            .objects
            .iter()
            .map(|o| ObjectView {
                id: o.id.clone(),
                class: o.class,
                appearance: o.appearance.clone(),
                shape: o.shape,
                position: o.position,
                yaw: o.yaw,
                temperature: if thermal { o.temperature } else { scene.ambient },
                powered: if thermal { o.powered } else { None },
                contents: o.contents.clone(),
                interaction: o.interaction.map(|i| (i.kind, o.local_to_world(&i.offset))),
                attached: o.attached_to.is_some(),
            })
            .collect();
        Self {
            ambient: scene.ambient,
            tool_pose: scene.tool_pose(),
            objects,
        }
    }

    pub fn object(&self, id: &str) -> Option<&ObjectView> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn attached(&self) -> Option<&ObjectView> {
        self.objects.iter().find(|o| o.attached)
    }

    pub fn tool_position(&self) -> Vector3<f64> {
        self.tool_pose.translation.vector
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExternalImage {
    Pseudocolor(PseudocolorImage),
    Rgb(RgbImage),
}

impl ExternalImage {
    pub fn as_image(&self) -> &RgbImage {
        match self {
            ExternalImage::Pseudocolor(p) => p.as_image(),
            ExternalImage::Rgb(i) => i,
        }
    }
}

/// Observation handed to a policy each control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub external_image: Option<ExternalImage>,
    /// Wrist RGB downscaled to the model input size.
    pub wrist_image: Option<RgbImage>,
    /// Joint angles then gripper aperture.
    pub state: [f64; 7],
    pub task_prompt: String,
    pub view: SceneView,
}

/// External-camera frame for a condition: thermal pseudocolor or plain RGB.
pub fn external_frame(scene: &Scene, condition: Condition) -> ExternalImage {
    let cam = &scene.external_camera;
    match condition {
        Condition::RgbRgb => ExternalImage::Rgb(render_rgb(scene, cam)),
        _ => {
            let frame = render_thermal(scene, cam);
            ExternalImage::Pseudocolor(
                thermal_to_pseudocolor(&frame, &TempRange::default(), &InfernoPalette::standard())
                    .expect("sensor frames fit the model input"),
            )
        }
    }
}

/// Wrist RGB at capture resolution.
pub fn wrist_frame(scene: &Scene) -> RgbImage {
    render_rgb(scene, &scene.wrist_camera())
}

pub fn to_model_input(img: &RgbImage) -> RgbImage {
    image::imageops::resize(img, MODEL_IMAGE_SIZE, MODEL_IMAGE_SIZE, FilterType::Triangle)
}

impl Observation {
    /// Builds an observation; images are rendered only when `with_images` is set.
    pub fn capture(scene: &Scene, condition: Condition, prompt: &str, with_images: bool) -> Self {
        let (external_image, wrist_image) = if with_images {
            (
                Some(external_frame(scene, condition)),
                Some(to_model_input(&wrist_frame(scene))),
            )
        } else {
            (None, None)
        };
        Self {
            external_image,
            wrist_image,
            state: scene.state_vector(),
            task_prompt: prompt.to_string(),
            view: SceneView::new(scene, condition),
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.state.iter().any(|v| !v.is_finite()) {
            return Err(ExecError::Observation("non-finite state".into()));
        }
        if let Some(w) = &self.wrist_image {
            if w.dimensions() != (MODEL_IMAGE_SIZE, MODEL_IMAGE_SIZE) {
                return Err(ExecError::Observation(format!(
                    "wrist image is {:?}, expected {MODEL_IMAGE_SIZE}x{MODEL_IMAGE_SIZE}",
                    w.dimensions()
                )));
            }
        }
        Ok(())
    }
}

/// A control policy. `act` is called once per control cycle.
pub trait Policy {
    fn act(&mut self, obs: &Observation) -> Result<Action, ExecError>;

    /// Whether observations must carry rendered images.
    fn wants_images(&self) -> bool {
        false
    }
}

/// Position in a sub-task queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueState {
    pub index: usize,
    pub len: usize,
    pub terminated: bool,
}

impl QueueState {
    pub fn new(len: usize) -> Self {
        Self {
            index: 0,
            len,
            terminated: len == 0,
        }
    }
}

/// Moves to the next sub-task once the done flag crosses the threshold.
pub fn advance_if_done(queue: QueueState, action: &Action) -> QueueState {
    if queue.terminated || action.done < DONE_THRESHOLD {
        return queue;
    }
    if queue.index + 1 >= queue.len {
        QueueState {
            terminated: true,
            ..queue
        }
    } else {
        QueueState {
            index: queue.index + 1,
            ..queue
        }
    }
}
