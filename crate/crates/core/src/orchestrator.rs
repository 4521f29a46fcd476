//! Closed-loop trials: plan, execute sub-tasks at 10 Hz over a 30 Hz sim,
//! judge each sub-task, and fold many trials into success tables.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{open_recorder, DatasetError, Episode, EpisodeHeader, Recorder, RECORD_HZ};
use crate::executor::{
    acceptable_targets, external_frame, place_point, wrist_frame, Action, Condition, ExecError, FlatPolicy,
    Observation, Policy, SceneView, ScriptedPolicy, DEFAULT_FLAT_SIGMA, DONE_THRESHOLD,
};
use crate::plan::{format_subtask, Relation, SlotRole, SubTask, Verb};
use crate::planner::{Planner, PlannerError};
use crate::sim::{scene_from_task, EventKind, Scene, SimError, TASKS};

pub const SIM_DT: f64 = 1.0 / 30.0;
/// Sim steps per control cycle (10 Hz).
pub const CONTROL_EVERY: u64 = 3;
/// Sim steps per recorded frame (15 Hz).
pub const RECORD_EVERY: u64 = 2;
pub const DEFAULT_BUDGET: usize = 300;
/// Minimum rise for a successful pick.
pub const LIFT_SUCCESS_M: f64 = 0.10;
/// Maximum horizontal miss for a successful place.
pub const PLACE_TOLERANCE_M: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("unknown task {0}")]
    UnknownTask(u8),
    #[error("no trials requested")]
    NoTrials,
    #[error("nothing to aggregate")]
    Empty,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOptions {
    /// Control steps allowed per sub-task.
    pub budget: usize,
    pub planner: Planner,
    pub flat_sigma: f64,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            planner: Planner::Mock,
            flat_sigma: DEFAULT_FLAT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskResult {
    pub subtask: String,
    pub success: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub task_id: u8,
    pub condition: Condition,
    pub seed: u64,
    pub subtasks: Vec<SubTaskResult>,
    /// Simulated seconds.
    pub wall: f64,
    pub error: Option<String>,
}

impl TrialResult {
    /// Every sub-task succeeded and planning worked.
    pub fn success(&self) -> bool {
        self.error.is_none() && !self.subtasks.is_empty() && self.subtasks.iter().all(|s| s.success)
    }
}

/// Hooks into the trial loop, used for recording.
pub trait TrialObserver {
    /// After every sim step, with the action being executed and its prompt.
    fn on_sim_step(&mut self, _scene: &Scene, _action: &Action, _prompt: &str) -> Result<(), OrchestratorError> {
        Ok(())
    }
    /// A sub-task (or the whole flat task) ended.
    fn on_prompt_end(&mut self) -> Result<(), OrchestratorError> {
        Ok(())
    }
}

struct NoObserver;
impl TrialObserver for NoObserver {}

fn resolution_rng(seed: u64, condition: Condition) -> ChaCha8Rng {
    let tag = match condition {
        Condition::Flat => 1u64,
        Condition::RgbRgb => 2,
        Condition::Rgbt => 3,
    };
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (tag << 60))
}

/// Success of one sub-task from the scene before and after it ran.
pub fn judge_subtask(before: &Scene, after: &Scene, subtask: &SubTask) -> bool {
    let truth = SceneView::new(before, Condition::Rgbt);
    let accept = |slot: &str| acceptable_targets(slot, &truth).unwrap_or_default();
    let events = || after.events_since(before.tick).map(|e| &e.kind);
    match subtask.verb() {
        Verb::PickUp => {
            let ok = accept(subtask.object());
            match after.attached_object() {
                Some(held) if ok.contains(&held.id) => before
                    .object(&held.id)
                    .is_some_and(|b| held.position.z >= b.position.z + LIFT_SUCCESS_M),
                _ => false,
            }
        }
        Verb::Place => {
            let carried = before
                .attached_object()
                .map(|o| vec![o.id.clone()])
                .unwrap_or_else(|| accept(subtask.object()));
            let relation = subtask.relation().unwrap_or(Relation::On);
            let reference = subtask.slot(SlotRole::Reference).unwrap_or_default();
            let targets: Vec<_> = accept(reference)
                .iter()
                .filter_map(|r| place_point(&truth, r, relation))
                .collect();
            carried.iter().any(|id| {
                after.object(id).is_some_and(|o| {
                    o.attached_to.is_none()
                        && targets.iter().any(|p| (o.position.xy() - p.xy()).norm() <= PLACE_TOLERANCE_M)
                })
            })
        }
        Verb::Press => {
            let ok = accept(subtask.object());
            events().any(|e| matches!(e, EventKind::Pressed { object } if ok.contains(object)))
        }
        Verb::Pour => {
            let ok = accept(subtask.slot(SlotRole::Destination).unwrap_or_default());
            events().any(|e| matches!(e, EventKind::Poured { into, .. } if ok.contains(into)))
        }
        Verb::TurnOff => {
            let ok = accept(subtask.object());
            !ok.is_empty() && ok.iter().all(|id| after.object(id).is_some_and(|o| o.powered == Some(false)))
        }
    }
}

/// Runs `act` then three sim steps; returns the action.
fn control_cycle(
    scene: &mut Scene,
    policy: &mut dyn Policy,
    condition: Condition,
    prompt: &str,
    observer: &mut dyn TrialObserver,
) -> Result<Action, OrchestratorError> {
    let obs = Observation::capture(scene, condition, prompt, policy.wants_images());
    let action = policy.act(&obs)?;
    for _ in 0..CONTROL_EVERY {
        scene.step(SIM_DT, &action)?;
        observer.on_sim_step(scene, &action, prompt)?;
    }
    Ok(action)
}

fn run_hierarchical(
    scene: &mut Scene,
    subtasks: &[SubTask],
    condition: Condition,
    seed: u64,
    budget: usize,
    observer: &mut dyn TrialObserver,
) -> Result<Vec<SubTaskResult>, OrchestratorError> {
    let mut rng = resolution_rng(seed, condition);
    let mut out = Vec::new();
    for t in subtasks {
        let prompt = format_subtask(t);
        let before = scene.clone();
        let view = SceneView::new(scene, condition);
        let mut steps = 0;
        match ScriptedPolicy::new(t, &view, &mut rng) {
            Ok(mut policy) => {
                while steps < budget {
                    let a = control_cycle(scene, &mut policy, condition, &prompt, observer)?;
                    steps += 1;
                    if a.done >= DONE_THRESHOLD {
                        break;
                    }
                }
                observer.on_prompt_end()?;
            }
            Err(ExecError::Resolution(_)) => {}
            Err(e) => return Err(e.into()),
        }
        out.push(SubTaskResult {
            success: judge_subtask(&before, scene, t),
            subtask: prompt,
            steps,
        });
    }
    Ok(out)
}

fn run_flat(
    scene: &mut Scene,
    subtasks: &[SubTask],
    instruction: &str,
    seed: u64,
    opts: &TrialOptions,
    observer: &mut dyn TrialObserver,
) -> Result<Vec<SubTaskResult>, OrchestratorError> {
    let mut rng = resolution_rng(seed, Condition::Flat);
    let view = SceneView::new(scene, Condition::Flat);
    let mut policy = FlatPolicy::new(subtasks, &view, &mut rng, opts.flat_sigma, seed ^ 0xF1A7)?;
    let n = subtasks.len();
    let mut steps = vec![0usize; n];
    let mut results: Vec<Option<bool>> = vec![None; n];
    let mut before = scene.clone();
    let mut phase = 0;
    while phase < n && steps[phase] < opts.budget {
        let a = control_cycle(scene, &mut policy, Condition::Flat, instruction, observer)?;
        steps[phase] += 1;
        let now = if a.done >= DONE_THRESHOLD { n } else { policy.phase() };
        while phase < now.min(n) {
            results[phase] = Some(judge_subtask(&before, scene, &subtasks[phase]));
            before = scene.clone();
            phase += 1;
        }
    }
    observer.on_prompt_end()?;
    // Phases the budget cut off are judged on the final state.
    for p in phase..n {
        results[p] = Some(judge_subtask(&before, scene, &subtasks[p]));
    }
    Ok(subtasks
        .iter()
        .zip(results)
        .zip(steps)
        .map(|((t, ok), s)| SubTaskResult {
            subtask: format_subtask(t),
            success: ok.unwrap_or(false),
            steps: s,
        })
        .collect())
}

/// Runs one trial with an optional observer.
pub fn run_trial_observed(
    task_id: u8,
    condition: Condition,
    seed: u64,
    opts: &TrialOptions,
    observer: &mut dyn TrialObserver,
) -> Result<TrialResult, OrchestratorError> {
    let info = TASKS
        .iter()
        .find(|t| t.id == task_id)
        .ok_or(OrchestratorError::UnknownTask(task_id))?;
    let scene = scene_from_task(task_id, seed)?;
    run_scene_trial(scene, info.instruction, condition, opts, observer)
}

/// Plans and executes `instruction` on a prepared scene. Task id and seed
/// in the result come from the scene.
pub fn run_scene_trial(
    mut scene: Scene,
    instruction: &str,
    condition: Condition,
    opts: &TrialOptions,
    observer: &mut dyn TrialObserver,
) -> Result<TrialResult, OrchestratorError> {
    let (task_id, seed) = (scene.task_id.unwrap_or(0), scene.seed);
    // The flat policy always decomposes with the oracle planner: it needs the phase list, not a planner.
    let planner = if condition == Condition::Flat { &Planner::Mock } else { &opts.planner };
    let plan = match planner.plan(&scene, instruction) {
        Ok(p) => p,
        Err(e @ (PlannerError::Planning(_) | PlannerError::PlannerOutput { .. })) => {
            return Ok(TrialResult {
                task_id,
                condition,
                seed,
                subtasks: Vec::new(),
                wall: 0.0,
                error: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let subtasks = match condition {
        Condition::Flat => run_flat(&mut scene, &plan.subtasks, instruction, seed, opts, observer)?,
        _ => run_hierarchical(&mut scene, &plan.subtasks, condition, seed, opts.budget, observer)?,
    };
    Ok(TrialResult {
        task_id,
        condition,
        seed,
        subtasks,
        wall: scene.clock,
        error: None,
    })
}

pub fn run_trial(task_id: u8, condition: Condition, seed: u64, opts: &TrialOptions) -> Result<TrialResult, OrchestratorError> {
    run_trial_observed(task_id, condition, seed, opts, &mut NoObserver)
}

/// Mean and sample standard deviation (n-1); a single value has SD 0.
pub fn aggregate(rates: &[f64]) -> Result<(f64, f64), OrchestratorError> {
    if rates.is_empty() {
        return Err(OrchestratorError::Empty);
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    if rates.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub task_id: u8,
    pub condition: Condition,
    pub trials: usize,
    /// (sub-task, success %) in plan order.
    pub rows: Vec<(String, f64)>,
    pub task_average: f64,
    pub task_sd: f64,
    /// Share of trials where every sub-task succeeded, %.
    pub end_to_end: f64,
}

impl SuccessTable {
    /// Folds trial results. A row's denominator is the number of trials whose
    /// plan contained it, plus trials that failed to plan at all.
    pub fn from_trials(task_id: u8, condition: Condition, trials: &[TrialResult]) -> Result<Self, OrchestratorError> {
        if trials.is_empty() {
            return Err(OrchestratorError::NoTrials);
        }
        let mut order: Vec<String> = Vec::new();
        let mut wins: BTreeMap<String, usize> = BTreeMap::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        // Longest plans first so branch rows keep their plan order.
        let mut sorted: Vec<&TrialResult> = trials.iter().collect();
        sorted.sort_by_key(|t| std::cmp::Reverse(t.subtasks.len()));
        for t in &sorted {
            for s in &t.subtasks {
                if !order.contains(&s.subtask) {
                    order.push(s.subtask.clone());
                }
                *seen.entry(s.subtask.clone()).or_default() += 1;
                if s.success {
                    *wins.entry(s.subtask.clone()).or_default() += 1;
                }
            }
        }
        let n = trials.len() as f64;
        let failed_planning = trials.iter().filter(|t| t.error.is_some()).count();
        let rows: Vec<(String, f64)> = order
            .into_iter()
            .map(|s| {
                let w = wins.get(&s).copied().unwrap_or(0) as f64;
                let d = (seen[&s] + failed_planning) as f64;
                (s, 100.0 * w / d)
            })
            .collect();
        let rates: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let (task_average, task_sd) = if rates.is_empty() { (0.0, 0.0) } else { aggregate(&rates)? };
        let end_to_end = 100.0 * trials.iter().filter(|t| t.success()).count() as f64 / n;
        Ok(Self {
            task_id,
            condition,
            trials: trials.len(),
            rows,
            task_average,
            task_sd,
            end_to_end,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub table: SuccessTable,
    pub trials: Vec<TrialResult>,
}

/// Seeds `seed0 .. seed0 + n`; trials run in parallel and are collected in seed order.
pub fn run_experiment(
    task_id: u8,
    condition: Condition,
    n_trials: usize,
    seed0: u64,
    opts: &TrialOptions,
) -> Result<Experiment, OrchestratorError> {
    if n_trials == 0 {
        return Err(OrchestratorError::NoTrials);
    }
    let trials = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(task_id, condition, seed0 + i, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Experiment {
        table: SuccessTable::from_trials(task_id, condition, &trials)?,
        trials,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |v| format!("{v:.1}"))
}

/// Markdown with one column per condition (FLAT, RGB_RGB, RGBT) and a CSV
/// with one line per (task, sub-task, condition).
pub fn render_report(tables: &[SuccessTable]) -> Result<(String, String), OrchestratorError> {
    if tables.is_empty() {
        return Err(OrchestratorError::Empty);
    }
    let mut tasks: Vec<u8> = tables.iter().map(|t| t.task_id).collect();
    tasks.sort();
    tasks.dedup();
    let conds: Vec<Condition> = Condition::ALL
        .into_iter()
        .filter(|c| tables.iter().any(|t| t.condition == *c))
        .collect();
    let find = |task: u8, c: Condition| tables.iter().find(|t| t.task_id == task && t.condition == c);

    let mut md = String::from("| Task | Sub-task |");
    for c in &conds {
        md.push_str(&format!(" {c} |"));
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(conds.len()));
    md.push('\n');
    let mut csv = String::from("task,subtask,condition,success_pct\n");
    let mut averages: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    for &task in &tasks {
        let mut rows: Vec<String> = Vec::new();
        let mut by_len: Vec<&SuccessTable> = conds.iter().filter_map(|&c| find(task, c)).collect();
        by_len.sort_by_key(|t| std::cmp::Reverse(t.rows.len()));
        for t in by_len {
            for (s, _) in &t.rows {
                if !rows.contains(s) {
                    rows.push(s.clone());
                }
            }
        }
        for r in &rows {
            md.push_str(&format!("| {task} | {r} |"));
            for &c in &conds {
                let v = find(task, c).and_then(|t| t.rows.iter().find(|(s, _)| s == r).map(|x| x.1));
                md.push_str(&format!(" {} |", cell(v)));
                if let Some(v) = v {
                    csv.push_str(&format!("{task},\"{}\",{c},{v:.1}\n", r.replace('"', "\"\"")));
                }
            }
            md.push('\n');
        }
        md.push_str(&format!("| {task} | **Task {task} Average** |"));
        for &c in &conds {
            match find(task, c) {
                Some(t) => {
                    md.push_str(&format!(" {:.1} ± {:.1} |", t.task_average, t.task_sd));
                    averages.entry(c).or_default().push(t.task_average);
                }
                None => md.push_str(" n/a |"),
            }
        }
        md.push('\n');
    }
    if tasks.len() > 1 {
        md.push_str("| all | **Overall Average** |");
        for c in &conds {
            let (m, sd) = aggregate(&averages[c])?;
            md.push_str(&format!(" {m:.1} ± {sd:.1} |"));
        }
        md.push('\n');
    }
    Ok((md, csv))
}

/// Writes 15 Hz frames: every second sim step, with the action held since
/// the last control cycle. The final frame of each prompt carries done = 1.
struct EpisodeWriter {
    recorder: Recorder,
    condition: Condition,
    sim_steps: u64,
    pending: Option<PendingFrame>,
}

struct PendingFrame {
    t: f64,
    state: [f64; 7],
    action: Action,
    prompt: String,
    external: image::RgbImage,
    wrist: image::RgbImage,
}

impl EpisodeWriter {
    fn flush(&mut self, done: bool) -> Result<(), OrchestratorError> {
        if let Some(f) = self.pending.take() {
            let mut a = f.action.to_vec();
            a[7] = if done { 1.0 } else { 0.0 };
            self.recorder.append_frame(f.t, &f.state, &a, &f.prompt, &f.external, &f.wrist)?;
        }
        Ok(())
    }
}

impl TrialObserver for EpisodeWriter {
    fn on_sim_step(&mut self, scene: &Scene, action: &Action, prompt: &str) -> Result<(), OrchestratorError> {
        let k = self.sim_steps;
        self.sim_steps += 1;
        if k % RECORD_EVERY != 0 {
            return Ok(());
        }
        self.flush(false)?;
        self.pending = Some(PendingFrame {
            t: (k / RECORD_EVERY) as f64 / RECORD_HZ,
            state: scene.state_vector(),
            action: *action,
            prompt: prompt.to_string(),
            external: external_frame(scene, self.condition).as_image().clone(),
            wrist: wrist_frame(scene),
        });
        Ok(())
    }

    fn on_prompt_end(&mut self) -> Result<(), OrchestratorError> {
        self.flush(true)
    }
}

/// Runs a trial while streaming it to `out_root/episode_<id>`.
pub fn record_demonstration(
    task_id: u8,
    condition: Condition,
    seed: u64,
    episode_id: u64,
    opts: &TrialOptions,
    out_root: &Path,
) -> Result<(Episode, TrialResult), OrchestratorError> {
    let mut meta = BTreeMap::new();
    meta.insert("control_hz".to_string(), "10".to_string());
    meta.insert("sim_dt".to_string(), format!("{SIM_DT}"));
    let recorder = open_recorder(
        out_root,
        EpisodeHeader {
            id: episode_id,
            task_id,
            condition,
            seed,
            meta,
        },
    )?;
    let mut w = EpisodeWriter {
        recorder,
        condition,
        sim_steps: 0,
        pending: None,
    };
    let result = run_trial_observed(task_id, condition, seed, opts, &mut w)?;
    w.flush(true)?;
    let episode = w.recorder.finalize()?;
    Ok((episode, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_examples() {
        let close = |(m, s): (f64, f64), em: f64, es: f64| (m - em).abs() < 0.05 && (s - es).abs() < 0.05;
        assert!(close(aggregate(&[90.0, 90.0, 70.0, 70.0]).unwrap(), 80.0, 11.5));
        assert!(close(aggregate(&[90.0, 80.0, 80.0, 60.0, 60.0]).unwrap(), 74.0, 13.4));
        assert_eq!(aggregate(&[80.0]).unwrap(), (80.0, 0.0));
        assert!(matches!(aggregate(&[]), Err(OrchestratorError::Empty)));
    }

    #[test]
    fn task4_oracle_lifts_hot_battery() {
        let r = run_trial(4, Condition::Rgbt, 1, &TrialOptions::default()).unwrap();
        assert!(r.success(), "{r:?}");
        assert!(r.subtasks[0].steps <= 150);
    }

    #[test]
    fn report_needs_tables() {
        assert!(matches!(render_report(&[]), Err(OrchestratorError::Empty)));
    }
}
