//! Deterministic tabletop world: temperature-bearing objects, proximity
//! grasping, a conveyor, powered appliances and two cameras.

mod camera;
mod geometry;
mod render;
mod tasks;

use nalgebra::{Isometry3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{self, ArmModel, JointVector, KinematicsError, NUM_JOINTS};

pub use camera::{
    default_external_camera, wrist_camera, wrist_mount, CameraId, CameraModel, RGB_HEIGHT,
    RGB_WIDTH,
};
pub use geometry::Shape;
pub use render::{class_color, render_rgb, render_thermal, shade, BACKGROUND_RGB};
pub use tasks::{scene_from_task, TaskInfo, RIGHT_SIDE_OFFSET, TASKS};

pub const DEFAULT_AMBIENT_C: f64 = 21.5;
pub const DEFAULT_TAU_S: f64 = 600.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.3;
pub const MAX_DT: f64 = 0.1;

pub const GRASP_APERTURE: f64 = 0.3;
pub const RELEASE_APERTURE: f64 = 0.7;
pub const GRASP_RADIUS: f64 = 0.03;
/// Aperture units per second.
pub const GRIPPER_RATE: f64 = 3.0;
pub const FALL_SPEED: f64 = 0.5;

/// Range for explicit `interact` calls.
pub const INTERACT_RANGE: f64 = 0.04;
/// A closed, empty gripper this close to a button or switch actuates it.
pub const CONTACT_RADIUS: f64 = 0.03;
const CONTACT_RELEASE: f64 = 0.05;
pub const POUR_TILT: f64 = 0.5;
pub const POUR_DWELL_S: f64 = 1.0;
const POUR_HEIGHT: f64 = 0.06;

pub const HEATER_SETPOINT_C: f64 = 70.0;
pub const BATTERY_HOT_C: f64 = 55.0;
pub const ICE_CUP_C: f64 = 2.0;

/// Tool position of the arm's rest pose, gripper pointing at the table.
pub const READY_TOOL_POSITION: [f64; 3] = [0.30, 0.0, 0.25];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unknown task id {0}")]
    UnknownTask(u8),
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("no object with id {0:?}")]
    NoSuchObject(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("scene json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Cup,
    CokeCan,
    Apple,
    FruitOther,
    Plate,
    Battery,
    Straightener,
    Wire,
    PowerStrip,
    IceMaker,
    IceCup,
    Scoop,
    TeaBag,
    Lemon,
    Button,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 15] = [
        ObjectClass::Cup,
        ObjectClass::CokeCan,
        ObjectClass::Apple,
        ObjectClass::FruitOther,
        ObjectClass::Plate,
        ObjectClass::Battery,
        ObjectClass::Straightener,
        ObjectClass::Wire,
        ObjectClass::PowerStrip,
        ObjectClass::IceMaker,
        ObjectClass::IceCup,
        ObjectClass::Scoop,
        ObjectClass::TeaBag,
        ObjectClass::Lemon,
        ObjectClass::Button,
    ];

    /// Human-readable class name, e.g. "coke can".
    pub fn display_name(self) -> &'static str {
        match self {
            ObjectClass::Cup => "cup",
            ObjectClass::CokeCan => "coke can",
            ObjectClass::Apple => "apple",
            ObjectClass::FruitOther => "fruit",
            ObjectClass::Plate => "plate",
            ObjectClass::Battery => "battery",
            ObjectClass::Straightener => "hair straightener",
            ObjectClass::Wire => "wire",
            ObjectClass::PowerStrip => "power strip",
            ObjectClass::IceMaker => "ice maker",
            ObjectClass::IceCup => "ice cup",
            ObjectClass::Scoop => "scoop",
            ObjectClass::TeaBag => "tea bag",
            ObjectClass::Lemon => "lemon",
            ObjectClass::Button => "button",
        }
    }

    pub fn graspable(self) -> bool {
        matches!(
            self,
            ObjectClass::Cup
                | ObjectClass::CokeCan
                | ObjectClass::Apple
                | ObjectClass::FruitOther
                | ObjectClass::Battery
                | ObjectClass::Wire
                | ObjectClass::IceCup
                | ObjectClass::Scoop
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    PressButton,
    TogglePower,
    Pour,
}

/// Where and how an object can be actuated; `offset` is in the object's yawed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub class: ObjectClass,
    /// Ground-truth name ("warm water"); what plans and the judge refer to.
    pub label: String,
    /// What a camera can tell apart ("water" for every clear cup).
    pub appearance: String,
    pub shape: Shape,
    /// Center of the shape.
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub temperature: f64,
    /// Appliances only.
    pub powered: Option<bool>,
    /// Temperature a powered heater relaxes toward.
    pub setpoint: Option<f64>,
    pub attached_to: Option<String>,
    pub velocity: Vector3<f64>,
    pub contents: Vec<ObjectClass>,
    pub interaction: Option<Interaction>,
    /// Object this one is mounted on (a button on its appliance).
    pub parent: Option<String>,
}

impl SceneObject {
    pub fn new(
        id: impl Into<String>,
        class: ObjectClass,
        shape: Shape,
        position: Vector3<f64>,
        temperature: f64,
    ) -> Self {
        let name = class.display_name().to_string();
        Self {
            id: id.into(),
            class,
            label: name.clone(),
            appearance: name,
            shape,
            position,
            yaw: 0.0,
            temperature,
            powered: None,
            setpoint: None,
            attached_to: None,
            velocity: Vector3::zeros(),
            contents: Vec::new(),
            interaction: None,
            parent: None,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn with_appearance(mut self, appearance: &str) -> Self {
        self.appearance = appearance.to_string();
        self
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.yaw = yaw;
        self
    }

    pub fn with_interaction(mut self, kind: InteractionKind, offset: Vector3<f64>) -> Self {
        self.interaction = Some(Interaction { kind, offset });
        self
    }

    pub fn top(&self) -> f64 {
        self.position.z + self.shape.half_height()
    }

    pub fn bottom(&self) -> f64 {
        self.position.z - self.shape.half_height()
    }

    /// Rotates an object-frame offset by yaw and adds the center.
    pub fn local_to_world(&self, offset: &Vector3<f64>) -> Vector3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw) * offset + self.position
    }

    pub fn interaction_point(&self) -> Option<Vector3<f64>> {
        self.interaction.map(|i| self.local_to_world(&i.offset))
    }

    fn validate(&self) -> Result<(), SimError> {
        let finite = self.position.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.temperature.is_finite();
        if !finite || !self.shape.is_valid() {
            return Err(SimError::InvalidStep(format!("object {} is malformed", self.id)));
        }
        Ok(())
    }
}

/// A cup-like receptacle that accepts poured contents.
pub fn container(obj: SceneObject) -> SceneObject {
    let h = obj.shape.half_height();
    obj.with_interaction(InteractionKind::Pour, Vector3::new(0.0, 0.0, h + POUR_HEIGHT))
}

/// Action vector: six absolute joint targets, gripper aperture command, done flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub joint_targets: [f64; NUM_JOINTS],
    pub gripper: f64,
    pub done: f64,
}

impl Action {
    pub const LEN: usize = 8;

    pub fn hold(joints: &JointVector, gripper: f64) -> Self {
        Self {
            joint_targets: joints.0,
            gripper,
            done: 0.0,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.joint_targets.to_vec();
        v.push(self.gripper);
        v.push(self.done);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, SimError> {
        if v.len() != Self::LEN {
            return Err(SimError::InvalidStep(format!(
                "action has {} elements, expected {}",
                v.len(),
                Self::LEN
            )));
        }
        let mut joint_targets = [0.0; NUM_JOINTS];
        joint_targets.copy_from_slice(&v[..NUM_JOINTS]);
        Ok(Self {
            joint_targets,
            gripper: v[6],
            done: v[7],
        })
    }

    pub fn validate(&self, model: &ArmModel) -> Result<(), SimError> {
        model.check_limits(&JointVector(self.joint_targets))?;
        for (name, v) in [("gripper", self.gripper), ("done", self.done)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidStep(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub joints: JointVector,
    pub targets: JointVector,
    /// 1 = fully open, 0 = closed.
    pub gripper: f64,
    pub gripper_target: f64,
}

impl ArmState {
    /// Seven-element robot state: joint angles then gripper aperture.
    pub fn state_vector(&self) -> [f64; 7] {
        let mut s = [0.0; 7];
        s[..NUM_JOINTS].copy_from_slice(&self.joints.0);
        s[6] = self.gripper;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conveyor {
    pub center_x: f64,
    pub half_width: f64,
    pub y_start: f64,
    pub y_end: f64,
    pub surface_z: f64,
    /// Belt speed along +y, m/s.
    pub speed: f64,
}

impl Conveyor {
    pub fn covers(&self, p: &Vector3<f64>) -> bool {
        (p.x - self.center_x).abs() <= self.half_width && p.y >= self.y_start && p.y <= self.y_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Grasped { object: String },
    Released { object: String },
    Pressed { object: String },
    PowerToggled { object: String, powered: bool },
    Poured { from: String, into: String, contents: Vec<ObjectClass> },
    Spawned { object: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEvent {
    pub tick: u64,
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub object: String,
    /// Object center in the tool frame at the moment of grasping.
    pub offset: Vector3<f64>,
    pub yaw_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub task_id: Option<u8>,
    pub seed: u64,
    pub ambient: f64,
    pub tau: f64,
    pub noise_sigma: f64,
    pub objects: Vec<SceneObject>,
    pub model: ArmModel,
    pub arm: ArmState,
    pub external_camera: CameraModel,
    pub conveyor: Option<Conveyor>,
    pub clock: f64,
    pub tick: u64,
    pub events: Vec<SceneEvent>,
    pub grasp: Option<Grasp>,
    contacts: Vec<String>,
    pour: Option<(String, f64)>,
}

/// Exact Newtonian relaxation of `temp` toward `target` over `dt`.
pub fn relax_temperature(temp: f64, target: f64, dt: f64, tau: f64) -> f64 {
    target + (temp - target) * (-dt / tau).exp()
}

pub fn ready_pose(model: &ArmModel) -> JointVector {
    let target = Vector3::from(READY_TOOL_POSITION);
    let seed = JointVector([0.0, 0.1, 1.5, 1.5, 0.0, 0.0]);
    kinematics::solve_ik_tool_down(model, &target, &seed, 0.0)
        .expect("ready pose is reachable for the default arm")
}

fn yaw_of(pose: &Isometry3<f64>) -> f64 {
    let x = pose.rotation * Vector3::x();
    x.y.atan2(x.x)
}

impl Scene {
    /// Empty table with the arm at its ready pose.
    pub fn empty(seed: u64) -> Self {
        let model = ArmModel::default();
        let q = ready_pose(&model);
        Self {
            task_id: None,
            seed,
            ambient: DEFAULT_AMBIENT_C,
            tau: DEFAULT_TAU_S,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            objects: Vec::new(),
            arm: ArmState {
                joints: q,
                targets: q,
                gripper: 1.0,
                gripper_target: 1.0,
            },
            model,
            external_camera: default_external_camera(),
            conveyor: None,
            clock: 0.0,
            tick: 0,
            events: Vec::new(),
            grasp: None,
            contacts: Vec::new(),
            pour: None,
        }
    }

    /// Disables sensor noise so renders are exact.
    pub fn with_test_mode(mut self) -> Self {
        self.noise_sigma = 0.0;
        self
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn index_of(&self, id: &str) -> Result<usize, SimError> {
        self.objects
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| SimError::NoSuchObject(id.to_string()))
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn add_object(&mut self, obj: SceneObject) -> Result<(), SimError> {
        obj.validate()?;
        if self.object(&obj.id).is_some() {
            return Err(SimError::InvalidStep(format!("duplicate object id {}", obj.id)));
        }
        self.objects.push(obj);
        Ok(())
    }

    pub fn tool_pose(&self) -> Isometry3<f64> {
        kinematics::tool_pose(&self.model, &self.arm.joints)
            .expect("arm joints are kept within limits")
    }

    pub fn tool_position(&self) -> Vector3<f64> {
        self.tool_pose().translation.vector
    }

    pub fn wrist_camera(&self) -> CameraModel {
        wrist_camera(&self.tool_pose())
    }

    pub fn camera(&self, id: CameraId) -> CameraModel {
        match id {
            CameraId::External => self.external_camera.clone(),
            CameraId::Wrist => self.wrist_camera(),
        }
    }

    pub fn attached_object(&self) -> Option<&SceneObject> {
        self.grasp.as_ref().and_then(|g| self.object(&g.object))
    }

    pub fn state_vector(&self) -> [f64; 7] {
        self.arm.state_vector()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::Json(e.to_string()))
    }

    /// Advances the world by `dt` seconds under `command`.
    ///
    /// Invalid input leaves the scene untouched.
    pub fn step(&mut self, dt: f64, command: &Action) -> Result<(), SimError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(SimError::InvalidStep(format!("dt {dt} outside (0, {MAX_DT}]")));
        }
        command.validate(&self.model)?;

        let max_dq = self.model.max_joint_speed * dt;
        self.arm.targets = JointVector(command.joint_targets);
        for (q, t) in self.arm.joints.0.iter_mut().zip(command.joint_targets) {
            *q += (t - *q).clamp(-max_dq, max_dq);
        }
        self.arm.gripper_target = command.gripper;
        let dg = GRIPPER_RATE * dt;
        self.arm.gripper += (command.gripper - self.arm.gripper).clamp(-dg, dg);

        let tool = self.tool_pose();
        self.clock += dt;
        self.tick += 1;
        self.update_grasp(&tool);
        self.move_objects(&tool, dt);
        self.update_temperatures(dt);
        self.detect_contacts(&tool);
        self.detect_pour(&tool, dt);
        Ok(())
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(SceneEvent {
            tick: self.tick,
            time: self.clock,
            kind,
        });
    }

    fn update_grasp(&mut self, tool: &Isometry3<f64>) {
        let p = tool.translation.vector;
        if let Some(g) = &self.grasp {
            if self.arm.gripper > RELEASE_APERTURE {
                let id = g.object.clone();
                if let Some(o) = self.object_mut(&id) {
                    o.attached_to = None;
                }
                self.grasp = None;
                self.emit(EventKind::Released { object: id });
            }
            return;
        }
        if self.arm.gripper >= GRASP_APERTURE {
            return;
        }
        let nearest = self
            .objects
            .iter()
            .filter(|o| o.class.graspable() && o.parent.is_none())
            .map(|o| ((o.position - p).norm(), o))
            .filter(|(d, _)| *d < GRASP_RADIUS)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, o)| o.id.clone());
        if let Some(id) = nearest {
            let tool_yaw = yaw_of(tool);
            let o = self.object_mut(&id).expect("id just found");
            o.attached_to = Some("gripper".into());
            o.velocity = Vector3::zeros();
            let offset = tool.inverse_transform_point(&o.position.into()).coords;
            let yaw_offset = o.yaw - tool_yaw;
            self.grasp = Some(Grasp {
                object: id.clone(),
                offset,
                yaw_offset,
            });
            self.emit(EventKind::Grasped { object: id });
        }
    }

    /// Height of the highest surface under `idx`'s center that it can rest on.
    fn support_height(&self, idx: usize) -> f64 {
        let o = &self.objects[idx];
        let mut h: f64 = 0.0;
        if let Some(c) = &self.conveyor {
            if c.covers(&o.position) && o.bottom() >= c.surface_z - 1e-6 {
                h = h.max(c.surface_z);
            }
        }
        for (j, other) in self.objects.iter().enumerate() {
            if j == idx || other.attached_to.is_some() {
                continue;
            }
            let top = other.top();
            if top <= o.bottom() + 1e-6 && other.shape.covers_xy(&other.position, other.yaw, &o.position) {
                h = h.max(top);
            }
        }
        h
    }

    fn move_objects(&mut self, tool: &Isometry3<f64>, dt: f64) {
        if let Some(g) = self.grasp.clone() {
            let yaw = yaw_of(tool) + g.yaw_offset;
            let pos = tool.transform_point(&g.offset.into()).coords;
            if let Some(o) = self.object_mut(&g.object) {
                o.position = pos;
                o.yaw = yaw;
            }
        }
        for i in 0..self.objects.len() {
            if self.objects[i].attached_to.is_some() || self.objects[i].parent.is_some() {
                continue;
            }
            let rest = self.support_height(i) + self.objects[i].shape.half_height();
            let conveyor = self.conveyor.clone();
            let o = &mut self.objects[i];
            if o.position.z > rest + 1e-9 {
                o.position.z = (o.position.z - FALL_SPEED * dt).max(rest);
                o.velocity = Vector3::zeros();
                continue;
            }
            match conveyor {
                Some(c) if c.covers(&o.position) && (o.bottom() - c.surface_z).abs() < 1e-6 => {
                    let limit = c.y_end - o.shape.footprint_radius();
                    let y = (o.position.y + c.speed * dt).min(limit.max(o.position.y));
                    o.velocity = Vector3::new(0.0, (y - o.position.y) / dt, 0.0);
                    o.position.y = y;
                }
                _ => o.velocity = Vector3::zeros(),
            }
        }
    }

    fn update_temperatures(&mut self, dt: f64) {
        let (ambient, tau) = (self.ambient, self.tau);
        for o in &mut self.objects {
            let target = match (o.powered, o.setpoint) {
                (Some(true), Some(sp)) => sp,
                _ => ambient,
            };
            o.temperature = relax_temperature(o.temperature, target, dt, tau);
        }
    }

    fn detect_contacts(&mut self, tool: &Isometry3<f64>) {
        let p = tool.translation.vector;
        let armed = self.grasp.is_none() && self.arm.gripper < GRASP_APERTURE;
        let mut fire = Vec::new();
        let mut released = Vec::new();
        for o in &self.objects {
            let Some(inter) = o.interaction else { continue };
            if inter.kind == InteractionKind::Pour {
                continue;
            }
            let d = (o.local_to_world(&inter.offset) - p).norm();
            let touching = self.contacts.contains(&o.id);
            if d < CONTACT_RADIUS && armed && !touching {
                fire.push((o.id.clone(), inter.kind));
            } else if d > CONTACT_RELEASE && touching {
                released.push(o.id.clone());
            }
        }
        self.contacts.retain(|c| !released.contains(c));
        for (id, kind) in fire {
            self.contacts.push(id.clone());
            self.actuate(&id, kind);
        }
    }

    fn detect_pour(&mut self, tool: &Isometry3<f64>, dt: f64) {
        let Some(scoop) = self.attached_object() else {
            self.pour = None;
            return;
        };
        if scoop.contents.is_empty() {
            self.pour = None;
            return;
        }
        let scoop_id = scoop.id.clone();
        let p = tool.translation.vector;
        let tilted = kinematics::tool_tilt(tool) >= POUR_TILT;
        let target = self
            .objects
            .iter()
            .filter(|o| o.id != scoop_id)
            .filter(|o| matches!(o.interaction, Some(i) if i.kind == InteractionKind::Pour))
            .find(|o| {
                (p.xy() - o.position.xy()).norm() <= INTERACT_RANGE
                    && p.z >= o.top()
                    && p.z <= o.top() + 0.15
            })
            .map(|o| o.id.clone());
        match (tilted, target) {
            (true, Some(id)) => {
                let dwell = match &self.pour {
                    Some((prev, t)) if *prev == id => t + dt,
                    _ => dt,
                };
                if dwell >= POUR_DWELL_S - 1e-9 {
                    self.pour = None;
                    self.transfer_contents(&scoop_id, &id);
                } else {
                    self.pour = Some((id, dwell));
                }
            }
            _ => self.pour = None,
        }
    }

    fn transfer_contents(&mut self, from: &str, into: &str) {
        let contents = match self.object_mut(from) {
            Some(o) => std::mem::take(&mut o.contents),
            None => return,
        };
        if let Some(o) = self.object_mut(into) {
            o.contents.extend(contents.iter().copied());
        }
        self.emit(EventKind::Poured {
            from: from.to_string(),
            into: into.to_string(),
            contents,
        });
    }

    fn actuate(&mut self, id: &str, kind: InteractionKind) {
        match kind {
            InteractionKind::PressButton => {
                self.emit(EventKind::Pressed { object: id.to_string() });
                let parent = self.object(id).and_then(|o| o.parent.clone());
                let appliance = parent.unwrap_or_else(|| id.to_string());
                if self.object(&appliance).map(|o| o.class) == Some(ObjectClass::IceMaker) {
                    self.spawn_ice_cup(&appliance);
                }
            }
            InteractionKind::TogglePower => {
                let Some(o) = self.object_mut(id) else { return };
                let powered = !o.powered.unwrap_or(false);
                o.powered = Some(powered);
                self.emit(EventKind::PowerToggled {
                    object: id.to_string(),
                    powered,
                });
            }
            InteractionKind::Pour => {}
        }
    }

    fn spawn_ice_cup(&mut self, maker_id: &str) {
        if self.objects.iter().any(|o| o.class == ObjectClass::IceCup) {
            return;
        }
        let Some(maker) = self.object(maker_id) else { return };
        let shape = Shape::Cylinder {
            radius: 0.03,
            half_height: 0.04,
        };
        let mut pos = maker.local_to_world(&tasks::ICE_TRAY_OFFSET);
        pos.z = shape.half_height();
        let cup = container(SceneObject::new("ice_cup", ObjectClass::IceCup, shape, pos, ICE_CUP_C));
        self.objects.push(cup);
        self.emit(EventKind::Spawned {
            object: "ice_cup".into(),
        });
    }

    /// Explicitly actuates `target_id`; the tool must be within reach of its
    /// interaction point.
    pub fn interact(&mut self, kind: InteractionKind, target_id: &str) -> Result<(), SimError> {
        let idx = self.index_of(target_id)?;
        let target = &self.objects[idx];
        let inter = target
            .interaction
            .filter(|i| i.kind == kind)
            .ok_or_else(|| SimError::Range(format!("{target_id} does not support {kind:?}")))?;
        if kind == InteractionKind::Pour {
            match self.attached_object() {
                Some(s) if !s.contents.is_empty() => {}
                Some(_) => return Err(SimError::Range("grasped object holds nothing to pour".into())),
                None => return Err(SimError::Range("nothing grasped".into())),
            }
        }
        let point = target.local_to_world(&inter.offset);
        let d = (point - self.tool_position()).norm();
        if d > INTERACT_RANGE {
            return Err(SimError::Range(format!(
                "tool is {d:.3} m from {target_id}, needs {INTERACT_RANGE} m"
            )));
        }
        if kind == InteractionKind::Pour {
            let scoop = self.grasp.as_ref().expect("checked above").object.clone();
            self.transfer_contents(&scoop, target_id);
        } else {
            self.actuate(target_id, kind);
        }
        Ok(())
    }

    pub fn events_since(&self, tick: u64) -> impl Iterator<Item = &SceneEvent> {
        self.events.iter().filter(move |e| e.tick > tick)
    }
}
