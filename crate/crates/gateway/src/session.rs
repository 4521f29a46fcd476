//! One teleoperation session: a scene, the operator's current sub-task and an
//! optional open recording. Everything here is synchronous; the server runs
//! each session on its own thread.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::json;
use thermoact::dataset::{episode_dir_name, open_recorder, EpisodeHeader, Recorder, RECORD_HZ};
use thermoact::executor::{external_frame, wrist_frame, Action, Condition};
use thermoact::kinematics::JointVector;
use thermoact::orchestrator::{CONTROL_EVERY, RECORD_EVERY, SIM_DT};
use thermoact::plan::format_subtask;
use thermoact::planner::mock_plan;
use thermoact::png_base64;
use thermoact::sim::{scene_from_task, Scene, TASKS};

use crate::protocol::{salvage_seq, Command, ServerMessage};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown task {0}")]
    UnknownTask(u8),
}

struct Pending {
    t: f64,
    state: [f64; 7],
    action: Action,
    prompt: String,
    external: image::RgbImage,
    wrist: image::RgbImage,
}

struct Recording {
    id: u64,
    recorder: Recorder,
    /// Sim steps since recording started.
    steps: u64,
    pending: Option<Pending>,
}

impl Recording {
    fn flush(&mut self, done: bool) -> Result<(), String> {
        if let Some(f) = self.pending.take() {
            let mut a = f.action.to_vec();
            a[7] = if done { 1.0 } else { 0.0 };
            self.recorder
                .append_frame(f.t, &f.state, &a, &f.prompt, &f.external, &f.wrist)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

pub struct Session {
    pub id: String,
    task: u8,
    seed: u64,
    scene: Scene,
    prompts: Vec<String>,
    subtask: usize,
    last_seq: Option<u64>,
    recording: Option<Recording>,
    data_root: PathBuf,
    next_episode: u64,
    /// Sim steps since the last reset.
    ticks: u64,
    /// PNG encodes performed for streaming, for tests.
    pub frames_encoded: u64,
}

fn instruction(task: u8) -> &'static str {
    TASKS[task as usize - 1].instruction
}

impl Session {
    pub fn new(id: impl Into<String>, task: u8, seed: u64, data_root: PathBuf) -> Result<Self, SessionError> {
        let mut s = Self {
            id: id.into(),
            task,
            seed,
            scene: Scene::empty(seed),
            prompts: Vec::new(),
            subtask: 0,
            last_seq: None,
            recording: None,
            data_root,
            next_episode: 0,
            ticks: 0,
            frames_encoded: 0,
        };
        s.reset(task, seed)?;
        Ok(s)
    }

    fn reset(&mut self, task: u8, seed: u64) -> Result<(), SessionError> {
        let scene = scene_from_task(task, seed).map_err(|_| SessionError::UnknownTask(task))?;
        // A scene the planner rejects still gets teleoperated; prompts fall back to the instruction.
        self.prompts = mock_plan(&scene, instruction(task))
            .map(|p| p.subtasks.iter().map(format_subtask).collect())
            .unwrap_or_default();
        self.scene = scene;
        self.task = task;
        self.seed = seed;
        self.subtask = 0;
        self.ticks = 0;
        Ok(())
    }

    pub fn task(&self) -> u8 {
        self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            protocol: crate::PROTOCOL_VERSION,
            session: self.id.clone(),
            task: self.task,
            seed: self.seed,
        }
    }

    fn prompt(&self) -> String {
        self.prompts
            .get(self.subtask)
            .cloned()
            .unwrap_or_else(|| instruction(self.task).to_string())
    }

    pub fn state_update(&self) -> ServerMessage {
        ServerMessage::StateUpdate {
            t: self.scene.clock,
            state: self.scene.state_vector(),
            attached: self.scene.grasp.as_ref().map(|g| g.object.clone()),
            subtask: self.prompts.get(self.subtask).cloned(),
            recording: self.recording.is_some(),
        }
    }

    /// Handles one client text message. Returns the direct reply and any
    /// streamed messages; frames are only rendered for streaming when
    /// `broadcast` is set.
    pub fn apply(&mut self, text: &str, broadcast: bool) -> (ServerMessage, Vec<ServerMessage>) {
        let cmd: Command = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return (ServerMessage::error(salvage_seq(text), format!("bad command: {e}")), vec![]),
        };
        let seq = cmd.seq();
        if let Some(last) = self.last_seq {
            if seq <= last {
                return (ServerMessage::error(Some(seq), format!("seq {seq} is not after {last}")), vec![]);
            }
        }
        self.last_seq = Some(seq);
        let mut out = Vec::new();
        let reply = match self.dispatch(cmd, broadcast, &mut out) {
            Ok(data) => ServerMessage::Ack { seq, data },
            Err(message) => ServerMessage::error(Some(seq), message),
        };
        (reply, out)
    }

    fn dispatch(&mut self, cmd: Command, broadcast: bool, out: &mut Vec<ServerMessage>) -> Result<serde_json::Value, String> {
        match cmd {
            Command::Hello { .. } => Ok(json!({
                "protocol": crate::PROTOCOL_VERSION,
                "session": self.id,
                "task": self.task,
                "seed": self.seed,
            })),
            Command::SceneReset { task, seed, .. } => {
                if self.recording.is_some() {
                    return Err("stop recording before resetting the scene".into());
                }
                self.reset(task, seed).map_err(|e| e.to_string())?;
                out.push(self.state_update());
                Ok(json!({"task": task, "seed": seed}))
            }
            Command::Jog { deltas, .. } => {
                if deltas.iter().any(|d| !d.is_finite()) {
                    return Err("non-finite jog delta".into());
                }
                let mut want = self.scene.arm.targets.0;
                for (q, d) in want.iter_mut().zip(deltas) {
                    *q += d;
                }
                let applied = self.scene.model.clamp(&JointVector(want));
                let clamped = applied.0 != want;
                self.scene.arm.targets = applied;
                self.run_batch(broadcast, out)?;
                Ok(json!({"applied": applied.0, "clamped": clamped}))
            }
            Command::Gripper { aperture, .. } => {
                if !(0.0..=1.0).contains(&aperture) {
                    return Err(format!("aperture {aperture} outside [0, 1]"));
                }
                self.scene.arm.gripper_target = aperture;
                self.run_batch(broadcast, out)?;
                Ok(json!({"aperture": aperture}))
            }
            Command::MarkDone { .. } => {
                let prompt = self.prompt();
                let rec = self.recording.as_mut().ok_or("not recording")?;
                if rec.pending.is_none() {
                    return Err("no frames recorded for this sub-task".into());
                }
                rec.flush(true)?;
                if self.subtask < self.prompts.len() {
                    self.subtask += 1;
                }
                out.push(self.state_update());
                Ok(json!({"completed": prompt, "next": self.prompts.get(self.subtask)}))
            }
            Command::StartRecording { .. } => {
                if self.recording.is_some() {
                    return Err("already recording".into());
                }
                while self.data_root.join(episode_dir_name(self.next_episode)).exists() {
                    self.next_episode += 1;
                }
                let id = self.next_episode;
                let mut meta = BTreeMap::new();
                meta.insert("source".to_string(), "teleop".to_string());
                meta.insert("session".to_string(), self.id.clone());
                let header = EpisodeHeader {
                    id,
                    task_id: self.task,
                    condition: Condition::Rgbt,
                    seed: self.seed,
                    meta,
                };
                let recorder = open_recorder(&self.data_root, header).map_err(|e| e.to_string())?;
                self.next_episode += 1;
                self.recording = Some(Recording {
                    id,
                    recorder,
                    steps: 0,
                    pending: None,
                });
                Ok(json!({"episode": id}))
            }
            Command::StopRecording { .. } => {
                let mut rec = self.recording.take().ok_or("not recording")?;
                rec.flush(true)?;
                let id = rec.id;
                if rec.recorder.is_empty() {
                    let dir = rec.recorder.dir().to_path_buf();
                    drop(rec);
                    let _ = std::fs::remove_dir_all(dir);
                    return Err("recording had no frames and was discarded".into());
                }
                let ep = rec.recorder.finalize().map_err(|e| e.to_string())?;
                out.push(self.state_update());
                Ok(json!({
                    "episode": id,
                    "frames": ep.frames.len(),
                    "dir": ep.dir.map(|d| d.display().to_string()),
                }))
            }
        }
    }

    /// One control period: the arm chases the current targets for
    /// `CONTROL_EVERY` sim steps.
    fn run_batch(&mut self, broadcast: bool, out: &mut Vec<ServerMessage>) -> Result<(), String> {
        let action = Action {
            joint_targets: self.scene.arm.targets.0,
            gripper: self.scene.arm.gripper_target,
            done: 0.0,
        };
        let prompt = self.prompt();
        for _ in 0..CONTROL_EVERY {
            self.scene.step(SIM_DT, &action).map_err(|e| e.to_string())?;
            let stream = broadcast && self.ticks % RECORD_EVERY == 0;
            self.ticks += 1;
            let record = self.recording.as_ref().is_some_and(|r| r.steps % RECORD_EVERY == 0);
            if !stream && !record {
                if let Some(r) = &mut self.recording {
                    r.steps += 1;
                }
                continue;
            }
            let external = external_frame(&self.scene, Condition::Rgbt).as_image().clone();
            let wrist = wrist_frame(&self.scene);
            if stream {
                let t = self.scene.clock;
                for (camera, img) in [("external", &external), ("wrist", &wrist)] {
                    out.push(ServerMessage::Frame {
                        camera: camera.into(),
                        t,
                        png: png_base64(img),
                    });
                    self.frames_encoded += 1;
                }
            }
            if let Some(r) = &mut self.recording {
                let k = r.steps;
                r.steps += 1;
                if record {
                    r.flush(false)?;
                    r.pending = Some(Pending {
                        t: (k / RECORD_EVERY) as f64 / RECORD_HZ,
                        state: self.scene.state_vector(),
                        action,
                        prompt: prompt.clone(),
                        external,
                        wrist,
                    });
                }
            }
        }
        out.push(self.state_update());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use thermoact::thermal::{thermal_to_pseudocolor, InfernoPalette, TempRange};
    use thermoact::sim::render_thermal;

    fn session() -> (tempfile::TempDir, Session) {
        let tmp = tempfile::tempdir().unwrap();
        let s = Session::new("t", 4, 3, tmp.path().to_path_buf()).unwrap();
        (tmp, s)
    }

    #[test]
    fn streamed_external_frame_is_the_pseudocolor_of_the_scene() {
        let (_tmp, mut s) = session();
        let (reply, out) = s.apply(r#"{"type":"gripper","seq":1,"aperture":0.5}"#, true);
        assert!(matches!(reply, ServerMessage::Ack { seq: 1, .. }), "{reply:?}");
        // Control batches are 3 sim steps, so the second streamed tick is the last step.
        let frames: Vec<_> = out
            .iter()
            .filter_map(|m| match m {
                ServerMessage::Frame { camera, t, png } => Some((camera.as_str(), *t, png.as_str())),
                _ => None,
            })
            .collect();
        assert_eq!(frames.len(), 4);
        let (cam, t, png) = frames[2];
        assert_eq!(cam, "external");
        assert_eq!(t, frames[3].1);
        assert!((t - s.scene().clock).abs() < 1e-12);
        let expected = thermal_to_pseudocolor(
            &render_thermal(s.scene(), &s.scene().external_camera),
            &TempRange::default(),
            &InfernoPalette::standard(),
        )
        .unwrap();
        assert_eq!(png, png_base64(expected.as_image()));
    }

    #[test]
    fn no_subscribers_means_no_encoding() {
        let (_tmp, mut s) = session();
        for seq in 1..=5 {
            let (_, out) = s.apply(&format!(r#"{{"type":"jog","seq":{seq},"deltas":[0.01,0,0,0,0,0]}}"#), false);
            assert!(out.iter().all(|m| !matches!(m, ServerMessage::Frame { .. })));
        }
        assert_eq!(s.frames_encoded, 0);
    }

    #[test]
    fn reset_is_refused_while_recording() {
        let (_tmp, mut s) = session();
        s.apply(r#"{"type":"start_recording","seq":1}"#, false);
        let (r, _) = s.apply(r#"{"type":"scene_reset","seq":2,"task":1,"seed":0}"#, false);
        assert!(matches!(r, ServerMessage::Error { seq: Some(2), .. }));
        let (r, _) = s.apply(r#"{"type":"stop_recording","seq":3}"#, false);
        assert!(matches!(r, ServerMessage::Error { .. }), "empty recordings are discarded");
        let (r, _) = s.apply(r#"{"type":"scene_reset","seq":4,"task":9,"seed":0}"#, false);
        assert!(matches!(r, ServerMessage::Error { message, .. } if message.contains("unknown task")));
    }
}
