//! Waypoint state machines standing in for a learned executor.

use nalgebra::Vector3;
use rand::Rng;

use super::{resolve_target, Action, ExecError, Observation, Policy, SceneView};
use crate::kinematics::{solve_ik_tool_down, ArmModel, JointVector};
use crate::plan::{format_subtask, parse_subtask, Relation, SlotRole, SubTask, Verb};
use crate::sim::RIGHT_SIDE_OFFSET;

const APPROACH_HEIGHT: f64 = 0.10;
const LIFT_HEIGHT: f64 = 0.15;
const PUSH_DEPTH: f64 = 0.02;
const PLACE_CLEARANCE: f64 = 0.01;
const POUR_TOOL_TILT: f64 = 0.8;
/// Control steps spent tilted over the destination (1.2 s).
const POUR_DWELL_STEPS: u32 = 12;
const JOINT_TOLERANCE: f64 = 0.01;
const GRIPPER_TOLERANCE: f64 = 0.02;
const TILT_FALLBACK: [f64; 5] = [0.8, 0.7, 0.65, 0.6, 0.55];
const HEIGHT_FALLBACK: [f64; 3] = [0.0, 0.02, 0.04];

/// Where a move step sends the tool.
#[derive(Debug, Clone, PartialEq)]
pub enum StepTarget {
    Point(Vector3<f64>),
    /// Live object center plus an offset.
    Object { id: String, offset: Vector3<f64> },
    /// Live interaction point plus an offset.
    Interaction { id: String, offset: Vector3<f64> },
    /// Puts the held object's bottom center at the point.
    Carried(Vector3<f64>),
    /// Straight up from wherever the tool is when the step starts.
    Lift(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Move { target: StepTarget, tilt: f64 },
    Gripper(f64),
    Dwell(u32),
    Done,
}

fn mv(target: StepTarget) -> Step {
    Step::Move { target, tilt: 0.0 }
}

/// Executes a fixed list of steps; the shared engine of scripted and flat policies.
#[derive(Debug, Clone)]
pub(crate) struct Script {
    steps: Vec<Step>,
    index: usize,
    /// Commanded aperture; taken from the observed state until a step sets it.
    gripper: Option<f64>,
    command: Option<JointVector>,
    latched: Option<Vector3<f64>>,
    dwell: u32,
    drift: [f64; 6],
    model: ArmModel,
}

impl Script {
    pub(crate) fn new(steps: Vec<Step>) -> Self {
        Self {
            steps,
            index: 0,
            gripper: None,
            command: None,
            latched: None,
            dwell: 0,
            drift: [0.0; 6],
            model: ArmModel::default(),
        }
    }

    fn advance(&mut self) {
        self.index += 1;
        self.latched = None;
        self.dwell = 0;
    }

    fn tool_target(&mut self, target: &StepTarget, view: &SceneView) -> Option<Vector3<f64>> {
        let tool = view.tool_position();
        match target {
            StepTarget::Point(p) => Some(*p),
            StepTarget::Object { id, offset } => view.object(id).map(|o| o.position + offset),
            StepTarget::Interaction { id, offset } => view
                .object(id)
                .and_then(|o| o.interaction)
                .map(|(_, p)| p + offset),
            StepTarget::Carried(p) => Some(match view.attached() {
                Some(held) => p + Vector3::new(0.0, 0.0, held.shape.half_height()) - (held.position - tool),
                None => *p,
            }),
            StepTarget::Lift(dz) => Some(*self.latched.get_or_insert(tool + Vector3::new(0.0, 0.0, *dz))),
        }
    }

    /// One control cycle. `drift` is added to every joint command.
    pub(crate) fn act(&mut self, obs: &Observation, drift: &[f64; 6]) -> Action {
        let current = JointVector([obs.state[0], obs.state[1], obs.state[2], obs.state[3], obs.state[4], obs.state[5]]);
        let aperture = obs.state[6];
        // The arm has been tracking last cycle's drift; judge arrival against that.
        let tracked = std::mem::replace(&mut self.drift, *drift);
        self.gripper.get_or_insert(if aperture < 0.5 { 0.0 } else { 1.0 });
        // Several steps may complete within one cycle; bound the loop anyway.
        for _ in 0..self.steps.len() + 1 {
            let hold = self.command.unwrap_or(current);
            match self.steps.get(self.index).cloned() {
                None | Some(Step::Done) => return self.emit(hold, 1.0),
                Some(Step::Gripper(g)) => {
                    self.gripper = Some(g);
                    if (aperture - g).abs() < GRIPPER_TOLERANCE {
                        self.advance();
                        continue;
                    }
                    return self.emit(hold, 0.0);
                }
                Some(Step::Dwell(n)) => {
                    if self.dwell >= n {
                        self.advance();
                        continue;
                    }
                    self.dwell += 1;
                    return self.emit(hold, 0.0);
                }
                Some(Step::Move { target, tilt }) => {
                    let Some(goal) = self.tool_target(&target, &obs.view) else {
                        // Target vanished: nothing sensible to track.
                        self.advance();
                        continue;
                    };
                    let seed = self.command.unwrap_or(current);
                    let Some(q) = self.reachable(&goal, &seed, tilt) else {
                        return self.emit(hold, 0.0);
                    };
                    self.command = Some(q);
                    let cmd = self.model.clamp(&JointVector(std::array::from_fn(|i| q.0[i] + tracked[i])));
                    if cmd.0.iter().zip(current.0).all(|(c, q)| (c - q).abs() < JOINT_TOLERANCE) {
                        self.advance();
                        continue;
                    }
                    return self.emit(q, 0.0);
                }
            }
        }
        let hold = self.command.unwrap_or(current);
        self.emit(hold, 0.0)
    }

    /// IK for the goal, backing off on tilt (then its sign) and then height
    /// near the edge of the workspace, where a vertical wrist cannot reach.
    fn reachable(&self, goal: &Vector3<f64>, seed: &JointVector, tilt: f64) -> Option<JointVector> {
        let tilts: Vec<f64> = if tilt > 0.0 {
            // Tipping the tool back toward the base shortens the reach needed.
            let forward = TILT_FALLBACK.iter().copied().filter(|t| *t <= tilt);
            forward.clone().chain(forward.map(|t| -t)).collect()
        } else {
            vec![0.0]
        };
        for dz in HEIGHT_FALLBACK {
            for &t in &tilts {
                let g = goal - Vector3::new(0.0, 0.0, dz);
                if let Ok(q) = solve_ik_tool_down(&self.model, &g, seed, t) {
                    return Some(q);
                }
            }
        }
        None
    }

    fn drifted(&self, mut q: JointVector) -> JointVector {
        for (c, d) in q.0.iter_mut().zip(self.drift) {
            *c += d;
        }
        self.model.clamp(&q)
    }

    fn emit(&self, joints: JointVector, done: f64) -> Action {
        Action {
            joint_targets: self.drifted(joints).0,
            gripper: self.gripper.unwrap_or(1.0),
            done,
        }
    }
}

/// Object center target for a place: above the reference (or beside it).
pub fn place_point(view: &SceneView, reference: &str, relation: Relation) -> Option<Vector3<f64>> {
    let r = view.object(reference)?;
    let mut p = r.position;
    if relation == Relation::RightSide {
        p += Vector3::from(RIGHT_SIDE_OFFSET);
    }
    Some(p)
}

/// Highest surface under `xy`, ignoring the held object.
fn support_top(view: &SceneView, p: &Vector3<f64>) -> f64 {
    view.objects
        .iter()
        .filter(|o| !o.attached && o.shape.covers_xy(&o.position, o.yaw, p))
        .map(|o| o.top())
        .fold(0.0, f64::max)
}

/// Resolves slots against `view` and lays out the waypoints for one sub-task.
pub(crate) fn steps_for<R: Rng + ?Sized>(
    subtask: &SubTask,
    view: &SceneView,
    rng: &mut R,
) -> Result<Vec<Step>, ExecError> {
    let up = |h: f64| Vector3::new(0.0, 0.0, h);
    let steps = match subtask.verb() {
        Verb::PickUp => {
            let id = resolve_target(subtask.object(), view, rng)?;
            vec![
                Step::Gripper(1.0),
                mv(StepTarget::Object { id: id.clone(), offset: up(APPROACH_HEIGHT) }),
                mv(StepTarget::Object { id: id.clone(), offset: up(0.0) }),
                Step::Gripper(0.0),
                mv(StepTarget::Lift(LIFT_HEIGHT)),
                Step::Done,
            ]
        }
        Verb::Place => {
            let reference = subtask.slot(SlotRole::Reference).expect("place has a reference");
            let rid = resolve_target(reference, view, rng)?;
            let relation = subtask.relation().unwrap_or(Relation::On);
            let mut p = place_point(view, &rid, relation).expect("resolved ids exist");
            p.z = support_top(view, &p) + PLACE_CLEARANCE;
            vec![
                mv(StepTarget::Carried(p + up(LIFT_HEIGHT))),
                mv(StepTarget::Carried(p)),
                Step::Gripper(1.0),
                mv(StepTarget::Lift(APPROACH_HEIGHT)),
                Step::Done,
            ]
        }
        Verb::Press | Verb::TurnOff => {
            let id = resolve_target(subtask.object(), view, rng)?;
            let has_point = view.object(&id).is_some_and(|o| o.interaction.is_some());
            if !has_point {
                return Err(ExecError::Resolution(format!("{} has no switch", subtask.object())));
            }
            vec![
                mv(StepTarget::Interaction { id: id.clone(), offset: up(APPROACH_HEIGHT) }),
                Step::Gripper(0.0),
                mv(StepTarget::Interaction { id: id.clone(), offset: up(-PUSH_DEPTH) }),
                mv(StepTarget::Interaction { id, offset: up(APPROACH_HEIGHT) }),
                Step::Gripper(1.0),
                Step::Done,
            ]
        }
        Verb::Pour => {
            let dest = subtask.slot(SlotRole::Destination).expect("pour has a destination");
            let id = resolve_target(dest, view, rng)?;
            let over = StepTarget::Interaction { id: id.clone(), offset: up(0.04) };
            vec![
                mv(StepTarget::Interaction { id: id.clone(), offset: up(APPROACH_HEIGHT) }),
                mv(over.clone()),
                Step::Move { target: over.clone(), tilt: POUR_TOOL_TILT },
                Step::Dwell(POUR_DWELL_STEPS),
                mv(over),
                mv(StepTarget::Lift(APPROACH_HEIGHT)),
                Step::Done,
            ]
        }
    };
    Ok(steps)
}

/// Oracle policy for a single sub-task.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    prompt: String,
    script: Script,
}

impl ScriptedPolicy {
    /// Resolves targets once, from the view at the start of the sub-task.
    pub fn new<R: Rng + ?Sized>(subtask: &SubTask, view: &SceneView, rng: &mut R) -> Result<Self, ExecError> {
        Ok(Self {
            prompt: format_subtask(subtask),
            script: Script::new(steps_for(subtask, view, rng)?),
        })
    }

    /// Builds the policy from a prompt string.
    pub fn from_prompt<R: Rng + ?Sized>(prompt: &str, view: &SceneView, rng: &mut R) -> Result<Self, ExecError> {
        let subtask = parse_subtask(prompt).map_err(|e| ExecError::Prompt {
            prompt: prompt.to_string(),
            reason: e.to_string(),
        })?;
        Self::new(&subtask, view, rng)
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, obs: &Observation) -> Result<Action, ExecError> {
        obs.validate()?;
        if obs.task_prompt != self.prompt {
            return Err(ExecError::Prompt {
                prompt: obs.task_prompt.clone(),
                reason: format!("policy was built for {:?}", self.prompt),
            });
        }
        Ok(self.script.act(obs, &[0.0; 6]))
    }
}
