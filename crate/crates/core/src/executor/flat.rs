//! A monolithic policy for the whole task: every phase chained, targets fixed
//! at the first observation, and a joint-space random walk standing in for
//! the drift of an end-to-end model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scripted::{steps_for, Script};
use super::{Action, ExecError, Observation, Policy, SceneView, Step};
use crate::kinematics::JointVector;
use crate::plan::SubTask;

/// Per-control-step standard deviation of the joint drift, rad.
pub const DEFAULT_FLAT_SIGMA: f64 = 0.01;

/// Lays out one script per phase against the initial view. Phases whose
/// target does not exist yet (e.g. an object an appliance will produce) come
/// back as `None` and are skipped at run time.
pub fn flat_phases<R: Rng + ?Sized>(subtasks: &[SubTask], view: &SceneView, rng: &mut R) -> Vec<Option<Vec<Step>>> {
    subtasks
        .iter()
        .map(|t| steps_for(t, view, rng).ok())
        .collect()
}

#[derive(Debug, Clone)]
pub struct FlatPolicy {
    phases: Vec<Option<Script>>,
    phase: usize,
    drift: [f64; 6],
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl FlatPolicy {
    pub fn new<R: Rng + ?Sized>(
        subtasks: &[SubTask],
        view: &SceneView,
        rng: &mut R,
        sigma: f64,
        noise_seed: u64,
    ) -> Result<Self, ExecError> {
        if subtasks.is_empty() {
            return Err(ExecError::Prompt {
                prompt: String::new(),
                reason: "task has no phases".into(),
            });
        }
        let noise = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| ExecError::Prompt {
                prompt: String::new(),
                reason: e.to_string(),
            })?)
        } else {
            None
        };
        Ok(Self {
            phases: flat_phases(subtasks, view, rng).into_iter().map(|p| p.map(Script::new)).collect(),
            phase: 0,
            drift: [0.0; 6],
            noise,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
        })
    }

    /// Index of the phase currently executing; equals the phase count once finished.
    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

impl Policy for FlatPolicy {
    fn act(&mut self, obs: &Observation) -> Result<Action, ExecError> {
        obs.validate()?;
        if let Some(n) = &self.noise {
            for d in &mut self.drift {
                *d += n.sample(&mut self.rng);
            }
        }
        loop {
            let last = self.phase + 1 >= self.phases.len();
            match self.phases.get_mut(self.phase) {
                None => {
                    let mut a = Action::hold(&obs_joints(obs), obs.state[6]);
                    a.done = 1.0;
                    return Ok(a);
                }
                Some(None) => {
                    self.phase += 1;
                }
                Some(Some(script)) => {
                    let mut a = script.act(obs, &self.drift);
                    if a.done >= 0.5 {
                        if last {
                            return Ok(a);
                        }
                        self.phase += 1;
                        continue;
                    }
                    a.done = 0.0;
                    return Ok(a);
                }
            }
        }
    }
}

fn obs_joints(obs: &Observation) -> JointVector {
    let mut q = [0.0; 6];
    q.copy_from_slice(&obs.state[..6]);
    JointVector(q)
}
