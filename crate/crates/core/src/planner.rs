//! High-level planner: turns a user instruction and the scene into a Plan,
//! either with a rule-based mock that reads ground truth or through a
//! remote chat-completion endpoint.
//!
//! Remote request body:
//! ```json
//! {"messages": [
//!   {"role": "system", "content": "<rendered guideline>"},
//!   {"role": "user", "content": [
//!     {"type": "text", "text": "<instruction>"},
//!     {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}},
//!     {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}]}
//! ```
//! Expected reply: `{"choices": [{"message": {"content": "<plan document>"}}]}`.

use std::collections::BTreeSet;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::executor::{external_frame, to_model_input, wrist_frame, Condition, ExternalImage, MODEL_IMAGE_SIZE};
use crate::net::{post_json, png_base64, NetError};
use crate::plan::{parse_plan_document, Plan, PlanError, Relation, SubTask, VERB_TEMPLATES};
use crate::sim::{ObjectClass, Scene, TASKS};
use crate::thermal::PseudocolorImage;

pub const WARM_THRESHOLD_C: f64 = 26.0;
pub const COLD_THRESHOLD_C: f64 = 19.0;
pub const HAZARD_THRESHOLD_C: f64 = 45.0;
/// A battery this far above ambient counts as overheated.
pub const BATTERY_MARGIN_C: f64 = 10.0;
/// Environment variable holding the bearer token for the remote planner.
pub const API_KEY_ENV: &str = "THERMOACT_PLANNER_API_KEY";

const PALETTE_LEGEND: &str = "dark purple = cold, bright yellow-white = hot";

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("sub-task vocabulary is empty")]
    EmptyVocabulary,
    #[error("instruction {0:?} matches no known task")]
    UnknownInstruction(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid planner request: {0}")]
    Request(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("planner request timed out")]
    Timeout,
    #[error("planner output unusable ({reason}): {raw:?}")]
    PlannerOutput { raw: String, reason: String },
}

impl From<PlanError> for PlannerError {
    fn from(e: PlanError) -> Self {
        PlannerError::Planning(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelinePrompt {
    pub role: String,
    pub environment_instructions: String,
    pub output_format: String,
    pub output_example: String,
}

impl GuidelinePrompt {
    pub fn render(&self) -> String {
        format!(
            "ROLE:\n{}\n\nENVIRONMENT:\n{}\n\nOUTPUT FORMAT:\n{}\n\nOUTPUT EXAMPLE:\n{}\n",
            self.role, self.environment_instructions, self.output_format, self.output_example
        )
    }
}

pub fn default_vocabulary() -> Vec<&'static str> {
    VERB_TEMPLATES.to_vec()
}

/// Assembles the guideline text. `task_context` usually lists the objects in view.
pub fn build_guideline_prompt(task_context: &str, vocabulary: &[&str]) -> Result<GuidelinePrompt, PlannerError> {
    if vocabulary.is_empty() {
        return Err(PlannerError::EmptyVocabulary);
    }
    let role = "You plan for a single robot arm at a tabletop. Break the user's request into short \
                sub-tasks that a low-level controller executes one at a time."
        .to_string();
    let mut env = String::from(
        "You receive two images. The first is a fixed external thermal camera rendered as a \
         pseudocolor image (",
    );
    env.push_str(PALETTE_LEGEND);
    env.push_str(
        "). The second is a color image from the wrist camera. Use the thermal image to tell \
         objects of the same kind apart by temperature: warm drinks, cold drinks, overheated \
         batteries and powered heating appliances stand out from the room-temperature background.",
    );
    if !task_context.trim().is_empty() {
        env.push_str("\nObjects on the table: ");
        env.push_str(task_context.trim());
    }
    let mut fmt = String::from(
        "Reply with an ANALYSIS: section describing what you see, then a PLAN: section with one \
         numbered sub-task per line. Every sub-task must use exactly one of these templates, \
         with object names in square brackets:\n",
    );
    for v in vocabulary {
        fmt.push_str("- ");
        fmt.push_str(v);
        fmt.push('\n');
    }
    let example = Plan::new(
        "Three cans stand on the floor. The second can appears dark purple, so it is cold.",
        vec![
            SubTask::pick_up("coke", Some("floor"))?,
            SubTask::place("coke", Relation::RightSide, "empty plate")?,
        ],
    )?;
    Ok(GuidelinePrompt {
        role,
        environment_instructions: env,
        output_format: fmt.trim_end().to_string(),
        output_example: example.to_document().trim_end().to_string(),
    })
}

/// Names a plan may legitimately mention in this scene.
pub fn scene_vocabulary(scene: &Scene) -> BTreeSet<String> {
    let mut v: BTreeSet<String> = ["floor", "table", "right side"].iter().map(|s| s.to_string()).collect();
    for o in &scene.objects {
        v.insert(o.label.clone());
        v.insert(o.appearance.clone());
        v.insert(o.class.display_name().to_string());
        if o.class == ObjectClass::IceMaker {
            v.insert(ObjectClass::IceCup.display_name().to_string());
        }
    }
    v
}

/// Comma-separated inventory of what the cameras can tell apart.
pub fn scene_context(scene: &Scene) -> String {
    let names: BTreeSet<&str> = scene.objects.iter().map(|o| o.appearance.as_str()).collect();
    names.into_iter().collect::<Vec<_>>().join(", ")
}

fn task_of(instruction: &str) -> Option<u8> {
    let norm = |s: &str| {
        s.trim()
            .trim_end_matches(['.', '!', '?'])
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase()
    };
    let want = norm(instruction);
    TASKS.iter().find(|t| norm(t.instruction) == want).map(|t| t.id)
}

fn max_temp<'a>(scene: &'a Scene, class: ObjectClass) -> Option<(&'a str, f64)> {
    scene
        .objects
        .iter()
        .filter(|o| o.class == class)
        .map(|o| (o.id.as_str(), o.temperature))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Rule-based planner over ground-truth temperatures.
pub fn mock_plan(scene: &Scene, instruction: &str) -> Result<Plan, PlannerError> {
    let task = task_of(instruction).ok_or_else(|| PlannerError::UnknownInstruction(instruction.to_string()))?;
    let floor = Some("floor");
    let right = Relation::RightSide;
    let (analysis, subtasks) = match task {
        1 => {
            let (id, t) = max_temp(scene, ObjectClass::Cup).ok_or_else(|| PlannerError::Planning("no cups".into()))?;
            if t < WARM_THRESHOLD_C {
                return Err(PlannerError::Planning("no warm cup".into()));
            }
            (
                format!("{id} is the warmest cup at {t:.1} C."),
                vec![
                    SubTask::pick_up("warm water", floor)?,
                    SubTask::place("warm water", right, "empty plate")?,
                    SubTask::pick_up("an apple", Some("fruit plate"))?,
                    SubTask::place("an apple", Relation::On, "empty plate")?,
                ],
            )
        }
        2 => {
            let coldest = scene
                .objects
                .iter()
                .filter(|o| o.class == ObjectClass::CokeCan)
                .map(|o| o.temperature)
                .fold(f64::INFINITY, f64::min);
            if !coldest.is_finite() {
                return Err(PlannerError::Planning("no coke".into()));
            }
            let mut steps = vec![
                SubTask::pick_up("coke", floor)?,
                SubTask::place("coke", right, "empty plate")?,
            ];
            let analysis = if coldest <= COLD_THRESHOLD_C {
                format!("A can reads {coldest:.1} C, cold enough to serve directly.")
            } else {
                if !scene.objects.iter().any(|o| o.class == ObjectClass::IceMaker) {
                    return Err(PlannerError::Planning("no cold coke and no ice maker".into()));
                }
                steps.extend([
                    SubTask::press("the button", "ice maker")?,
                    SubTask::pick_up("ice cup", Some("ice maker"))?,
                    SubTask::place("ice cup", right, "empty plate")?,
                ]);
                format!("All cans are near room temperature ({coldest:.1} C at best); serve one with ice.")
            };
            (analysis, steps)
        }
        3 => {
            let scoop = scene
                .objects
                .iter()
                .find(|o| o.class == ObjectClass::Scoop)
                .ok_or_else(|| PlannerError::Planning("no scoop".into()))?;
            let dest = match scoop.contents.first() {
                Some(ObjectClass::TeaBag) => "hot water",
                Some(ObjectClass::Lemon) => "coke",
                other => return Err(PlannerError::Planning(format!("scoop holds {other:?}"))),
            };
            (
                format!("The scoop holds {}; it belongs in the {dest}.", scoop.contents[0].display_name()),
                vec![
                    SubTask::pick_up("the scoop", floor)?,
                    SubTask::pour("scoop", dest)?,
                ],
            )
        }
        4 => {
            let (id, t) = max_temp(scene, ObjectClass::Battery)
                .ok_or_else(|| PlannerError::Planning("no batteries".into()))?;
            if t < scene.ambient + BATTERY_MARGIN_C {
                return Err(PlannerError::Planning("no overheated battery".into()));
            }
            (
                format!("{id} reads {t:.1} C."),
                vec![SubTask::pick_up("overheated battery", None)?],
            )
        }
        _ => {
            let hazard = scene
                .objects
                .iter()
                .any(|o| o.powered == Some(true) && o.temperature >= HAZARD_THRESHOLD_C);
            let mut steps = Vec::new();
            if hazard {
                steps.push(SubTask::turn_off("hair straightener")?);
            }
            steps.push(SubTask::pick_up("unplugged wire", floor)?);
            steps.push(SubTask::place("unplugged wire", Relation::To, "power strip")?);
            let analysis = if hazard {
                "A hair straightener is switched on and hot."
            } else {
                "Nothing is heating up."
            };
            (analysis.to_string(), steps)
        }
    };
    Ok(Plan::new(analysis, subtasks)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerRequest {
    pub user_instruction: String,
    pub external_pseudocolor: PseudocolorImage,
    pub wrist_rgb: RgbImage,
    pub guideline: GuidelinePrompt,
}

impl PlannerRequest {
    pub fn new(
        user_instruction: &str,
        external_pseudocolor: PseudocolorImage,
        wrist_rgb: RgbImage,
        guideline: GuidelinePrompt,
    ) -> Result<Self, PlannerError> {
        let want = (MODEL_IMAGE_SIZE, MODEL_IMAGE_SIZE);
        if wrist_rgb.dimensions() != want {
            return Err(PlannerError::Request(format!("wrist image is {:?}, expected {want:?}", wrist_rgb.dimensions())));
        }
        if external_pseudocolor.as_image().dimensions() != want {
            return Err(PlannerError::Request("external image has the wrong size".into()));
        }
        Ok(Self {
            user_instruction: user_instruction.to_string(),
            external_pseudocolor,
            wrist_rgb,
            guideline,
        })
    }

    /// Captures both cameras from the scene.
    pub fn from_scene(scene: &Scene, instruction: &str) -> Result<Self, PlannerError> {
        let guideline = build_guideline_prompt(&scene_context(scene), &default_vocabulary())?;
        let ExternalImage::Pseudocolor(ext) = external_frame(scene, Condition::Rgbt) else {
            unreachable!("thermal conditions render pseudocolor");
        };
        Self::new(instruction, ext, to_model_input(&wrist_frame(scene)), guideline)
    }

    fn messages(&self) -> Vec<Value> {
        let img = |i: &RgbImage| json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{}", png_base64(i))}});
        vec![
            json!({"role": "system", "content": self.guideline.render()}),
            json!({"role": "user", "content": [
                {"type": "text", "text": self.user_instruction},
                img(self.external_pseudocolor.as_image()),
                img(&self.wrist_rgb),
            ]}),
        ]
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

fn net_error(e: NetError) -> PlannerError {
    match e {
        NetError::Timeout => PlannerError::Timeout,
        NetError::Network(m) => PlannerError::Network(m),
        NetError::Body(m) => PlannerError::PlannerOutput {
            raw: String::new(),
            reason: m,
        },
    }
}

/// Asks a remote model for a plan; one retry with a correction message if
/// the first reply does not parse.
pub fn remote_plan(request: &PlannerRequest, endpoint: &str, timeout_s: f64) -> Result<Plan, PlannerError> {
    let key = std::env::var(API_KEY_ENV).ok();
    let mut messages = request.messages();
    let mut last_err = String::new();
    for attempt in 0..2 {
        let reply: ChatReply =
            post_json(endpoint, &json!({"messages": messages}), timeout_s, key.as_deref()).map_err(net_error)?;
        let raw = reply.choices.into_iter().next().map(|c| c.message.content).unwrap_or_default();
        match parse_plan_document(&raw) {
            Ok(plan) => return Ok(plan),
            Err(e) if attempt == 0 => {
                messages.push(json!({"role": "assistant", "content": raw}));
                messages.push(json!({"role": "user", "content": format!(
                    "Your reply could not be parsed ({e}). Answer again using exactly the OUTPUT FORMAT."
                )}));
                last_err = e.to_string();
            }
            Err(e) => {
                return Err(PlannerError::PlannerOutput {
                    raw,
                    reason: format!("{last_err}; then {e}"),
                })
            }
        }
    }
    unreachable!("loop returns on the second attempt")
}

/// Planner configuration as read from a config file or the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub backend: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    30.0
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            backend: "mock".into(),
            endpoint: None,
            timeout_s: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Planner {
    Mock,
    Remote { endpoint: String, timeout_s: f64 },
}

impl Planner {
    pub fn plan(&self, scene: &Scene, instruction: &str) -> Result<Plan, PlannerError> {
        match self {
            Planner::Mock => mock_plan(scene, instruction),
            Planner::Remote { endpoint, timeout_s } => {
                remote_plan(&PlannerRequest::from_scene(scene, instruction)?, endpoint, *timeout_s)
            }
        }
    }
}

pub fn select_backend(config: &PlannerConfig) -> Result<Planner, PlannerError> {
    match config.backend.to_ascii_lowercase().as_str() {
        "mock" => Ok(Planner::Mock),
        "remote" => {
            let endpoint = config
                .endpoint
                .clone()
                .filter(|e| !e.trim().is_empty())
                .ok_or_else(|| PlannerError::Config("remote backend needs an endpoint".into()))?;
            if !(config.timeout_s > 0.0) {
                return Err(PlannerError::Config(format!("timeout {} must be positive", config.timeout_s)));
            }
            Ok(Planner::Remote {
                endpoint,
                timeout_s: config.timeout_s,
            })
        }
        other => Err(PlannerError::Config(format!("unknown backend {other:?} (mock, remote)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_sections() {
        let p = build_guideline_prompt("cup, apple", &default_vocabulary()).unwrap();
        let text = p.render();
        for h in ["ROLE:", "ENVIRONMENT:", "OUTPUT FORMAT:", "OUTPUT EXAMPLE:"] {
            assert!(text.contains(h));
        }
        for v in VERB_TEMPLATES {
            assert!(text.contains(v));
        }
        assert!(text.contains(PALETTE_LEGEND));
        assert_eq!(text, build_guideline_prompt("cup, apple", &default_vocabulary()).unwrap().render());
        assert!(matches!(build_guideline_prompt("", &[]), Err(PlannerError::EmptyVocabulary)));
    }

    #[test]
    fn example_parses() {
        let p = build_guideline_prompt("", &default_vocabulary()).unwrap();
        assert_eq!(parse_plan_document(&p.output_example).unwrap().subtasks.len(), 2);
    }

    #[test]
    fn backends() {
        assert_eq!(select_backend(&PlannerConfig::default()).unwrap(), Planner::Mock);
        let mut c = PlannerConfig {
            backend: "remote".into(),
            ..Default::default()
        };
        assert!(matches!(select_backend(&c), Err(PlannerError::Config(_))));
        c.endpoint = Some("http://127.0.0.1:9/v1".into());
        assert!(matches!(select_backend(&c), Ok(Planner::Remote { .. })));
        c.backend = "oracle".into();
        assert!(matches!(select_backend(&c), Err(PlannerError::Config(_))));
    }

    #[test]
    fn instruction_matching() {
        assert_eq!(task_of("Give me a cold coke."), Some(2));
        assert_eq!(task_of("make coffee"), None);
    }
}
