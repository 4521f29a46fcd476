//! Bracketed sub-task commands and the line-oriented plan document.
//!
//! ```text
//! ANALYSIS:
//! free text
//! PLAN:
//! 1. pick up [coke] from [floor]
//! 2. place [coke] to the [right side] of [empty plate]
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The six canonical sub-task forms.
pub const VERB_TEMPLATES: [&str; 6] = [
    "pick up [X] from [Y]",
    "place [X] on the [Z]",
    "place [X] to the [right side] of [Z]",
    "press [X] on [Y]",
    "pour [X] into the [Y]",
    "turn off [X]",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnknownVerb,
    Arity(String),
    UnbalancedBracket,
    EmptySlot,
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} at byte {offset}", describe(.kind))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the parsed string.
    pub offset: usize,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::UnknownVerb => "unknown verb".into(),
        ParseErrorKind::Arity(m) => format!("arity mismatch: {m}"),
        ParseErrorKind::UnbalancedBracket => "unbalanced bracket".into(),
        ParseErrorKind::EmptySlot => "empty slot".into(),
        ParseErrorKind::Syntax(m) => m.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid slot text {0:?}: must be non-empty and bracket-free")]
    InvalidSlot(String),
    #[error("missing PLAN section")]
    MissingPlan,
    #[error("plan has no sub-tasks")]
    EmptyPlan,
    #[error("gap at line {line}: expected item {expected}, found {found}")]
    Gap {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: {source}")]
    SubTask { line: usize, source: ParseError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    PickUp,
    Place,
    Press,
    Pour,
    TurnOff,
}

impl Verb {
    pub fn phrase(self) -> &'static str {
        match self {
            Verb::PickUp => "pick up",
            Verb::Place => "place",
            Verb::Press => "press",
            Verb::Pour => "pour",
            Verb::TurnOff => "turn off",
        }
    }
}

/// Spatial relation of a place command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// "on the [Z]"
    On,
    /// "to the [right side] of [Z]"
    RightSide,
    /// "to [Z]", judged like `On`.
    To,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Object,
    Source,
    Reference,
    Appliance,
    Destination,
}

/// One parsed command. Slot texts are trimmed, non-empty and bracket-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubTask {
    verb: Verb,
    relation: Option<Relation>,
    slots: Vec<(SlotRole, String)>,
}

fn slot(text: &str) -> Result<String, PlanError> {
    let t = text.trim();
    if t.is_empty() || t.contains(['[', ']']) || t.contains('\n') {
        return Err(PlanError::InvalidSlot(text.to_string()));
    }
    Ok(t.to_string())
}

impl SubTask {
    pub fn pick_up(object: &str, source: Option<&str>) -> Result<Self, PlanError> {
        let mut slots = vec![(SlotRole::Object, slot(object)?)];
        if let Some(s) = source {
            slots.push((SlotRole::Source, slot(s)?));
        }
        Ok(Self {
            verb: Verb::PickUp,
            relation: None,
            slots,
        })
    }

    pub fn place(object: &str, relation: Relation, reference: &str) -> Result<Self, PlanError> {
        Ok(Self {
            verb: Verb::Place,
            relation: Some(relation),
            slots: vec![
                (SlotRole::Object, slot(object)?),
                (SlotRole::Reference, slot(reference)?),
            ],
        })
    }

    pub fn press(object: &str, appliance: &str) -> Result<Self, PlanError> {
        Ok(Self {
            verb: Verb::Press,
            relation: None,
            slots: vec![
                (SlotRole::Object, slot(object)?),
                (SlotRole::Appliance, slot(appliance)?),
            ],
        })
    }

    pub fn pour(object: &str, destination: &str) -> Result<Self, PlanError> {
        Ok(Self {
            verb: Verb::Pour,
            relation: None,
            slots: vec![
                (SlotRole::Object, slot(object)?),
                (SlotRole::Destination, slot(destination)?),
            ],
        })
    }

    pub fn turn_off(object: &str) -> Result<Self, PlanError> {
        Ok(Self {
            verb: Verb::TurnOff,
            relation: None,
            slots: vec![(SlotRole::Object, slot(object)?)],
        })
    }

    pub fn verb(&self) -> Verb {
        self.verb
    }

    pub fn relation(&self) -> Option<Relation> {
        self.relation
    }

    pub fn slots(&self) -> &[(SlotRole, String)] {
        &self.slots
    }

    pub fn slot(&self, role: SlotRole) -> Option<&str> {
        self.slots
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, t)| t.as_str())
    }

    /// The manipulated object (first slot of every verb).
    pub fn object(&self) -> &str {
        &self.slots[0].1
    }

    /// The second argument, whatever its role.
    pub fn target(&self) -> Option<&str> {
        self.slots.get(1).map(|(_, t)| t.as_str())
    }
}

impl fmt::Display for SubTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.object();
        match (self.verb, self.relation, self.target()) {
            (Verb::PickUp, _, Some(src)) => write!(f, "pick up [{o}] from [{src}]"),
            (Verb::PickUp, _, None) => write!(f, "pick up [{o}]"),
            (Verb::Place, Some(Relation::RightSide), Some(r)) => {
                write!(f, "place [{o}] to the [right side] of [{r}]")
            }
            (Verb::Place, Some(Relation::To), Some(r)) => write!(f, "place [{o}] to [{r}]"),
            (Verb::Place, _, Some(r)) => write!(f, "place [{o}] on the [{r}]"),
            (Verb::Press, _, Some(a)) => write!(f, "press [{o}] on [{a}]"),
            (Verb::Pour, _, Some(d)) => write!(f, "pour [{o}] into the [{d}]"),
            (Verb::TurnOff, _, _) => write!(f, "turn off [{o}]"),
            _ => unreachable!("constructors enforce arity"),
        }
    }
}

pub fn format_subtask(t: &SubTask) -> String {
    t.to_string()
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.src.len()
    }

    fn peek_bracket(&mut self) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with('[')
    }

    /// Consumes `word` (case-insensitive) if it is the next whole word.
    fn eat_word(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if rest.len() >= word.len()
            && rest.is_char_boundary(word.len())
            && rest[..word.len()].eq_ignore_ascii_case(word)
        {
            let after = rest[word.len()..].chars().next();
            if after.is_none_or(|c| c.is_whitespace() || c == '[') {
                self.pos += word.len();
                return true;
            }
        }
        false
    }

    fn eat_words(&mut self, words: &[&str]) -> bool {
        let start = self.pos;
        if words.iter().all(|w| self.eat_word(w)) {
            true
        } else {
            self.pos = start;
            false
        }
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            offset: self.pos.min(self.src.len()),
        }
    }

    fn bracket(&mut self, what: &str) -> Result<String, ParseError> {
        self.skip_ws();
        if !self.src[self.pos..].starts_with('[') {
            if self.pos >= self.src.len() {
                return Err(self.err(ParseErrorKind::Arity(format!("missing [{what}]"))));
            }
            if self.src[self.pos..].starts_with(']') {
                return Err(self.err(ParseErrorKind::UnbalancedBracket));
            }
            return Err(self.err(ParseErrorKind::Syntax(format!("expected [{what}]"))));
        }
        let open = self.pos;
        let body_start = open + 1;
        let rest = &self.src[body_start..];
        let close = match rest.find([']', '[']) {
            Some(i) if rest.as_bytes()[i] == b']' => i,
            Some(i) => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnbalancedBracket,
                    offset: body_start + i,
                })
            }
            None => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnbalancedBracket,
                    offset: open,
                })
            }
        };
        let text = rest[..close].trim();
        if text.is_empty() {
            return Err(ParseError {
                kind: ParseErrorKind::EmptySlot,
                offset: open,
            });
        }
        self.pos = body_start + close + 1;
        Ok(text.to_string())
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if self.at_end() {
            return Ok(());
        }
        if self.peek_bracket() {
            return Err(self.err(ParseErrorKind::Arity("too many arguments".into())));
        }
        if self.src[self.pos..].contains(']') && !self.src[self.pos..].contains('[') {
            return Err(self.err(ParseErrorKind::UnbalancedBracket));
        }
        Err(self.err(ParseErrorKind::Syntax("unexpected trailing text".into())))
    }
}

fn build(r: Result<SubTask, PlanError>, offset: usize) -> Result<SubTask, ParseError> {
    r.map_err(|_| ParseError {
        kind: ParseErrorKind::EmptySlot,
        offset,
    })
}

/// Parses one command such as `pick up [warm water] from [floor]`.
///
/// Verbs and connectives are case-insensitive and whitespace-tolerant.
pub fn parse_subtask(s: &str) -> Result<SubTask, ParseError> {
    let mut c = Cursor { src: s, pos: 0 };
    let verb = if c.eat_words(&["pick", "up"]) {
        Verb::PickUp
    } else if c.eat_words(&["turn", "off"]) {
        Verb::TurnOff
    } else if c.eat_word("place") {
        Verb::Place
    } else if c.eat_word("press") {
        Verb::Press
    } else if c.eat_word("pour") {
        Verb::Pour
    } else {
        c.skip_ws();
        return Err(c.err(ParseErrorKind::UnknownVerb));
    };
    let object = c.bracket("object")?;
    let start = c.pos;
    let task = match verb {
        Verb::PickUp => {
            if c.eat_word("from") {
                let src = c.bracket("source")?;
                build(SubTask::pick_up(&object, Some(&src)), start)?
            } else {
                build(SubTask::pick_up(&object, None), start)?
            }
        }
        Verb::TurnOff => build(SubTask::turn_off(&object), start)?,
        Verb::Place => {
            if c.eat_word("on") {
                c.eat_word("the");
                let r = c.bracket("reference")?;
                build(SubTask::place(&object, Relation::On, &r), start)?
            } else if c.eat_word("to") {
                let had_the = c.eat_word("the");
                let first_at = c.pos;
                let first = c.bracket("reference")?;
                if c.eat_word("of") {
                    if !first.eq_ignore_ascii_case("right side") {
                        return Err(ParseError {
                            kind: ParseErrorKind::Syntax(format!("unknown relation {first:?}")),
                            offset: first_at,
                        });
                    }
                    let r = c.bracket("reference")?;
                    build(SubTask::place(&object, Relation::RightSide, &r), start)?
                } else if had_the {
                    return Err(c.err(ParseErrorKind::Syntax("expected 'of'".into())));
                } else {
                    build(SubTask::place(&object, Relation::To, &first), start)?
                }
            } else if c.at_end() {
                return Err(c.err(ParseErrorKind::Arity("place needs a reference".into())));
            } else {
                return Err(c.err(ParseErrorKind::Syntax("expected 'on the' or 'to the'".into())));
            }
        }
        Verb::Press => {
            if !c.eat_word("on") {
                return Err(missing(&mut c, "on"));
            }
            let a = c.bracket("appliance")?;
            build(SubTask::press(&object, &a), start)?
        }
        Verb::Pour => {
            if !c.eat_word("into") {
                return Err(missing(&mut c, "into the"));
            }
            c.eat_word("the");
            let d = c.bracket("destination")?;
            build(SubTask::pour(&object, &d), start)?
        }
    };
    c.finish()?;
    Ok(task)
}

fn missing(c: &mut Cursor<'_>, connective: &str) -> ParseError {
    if c.at_end() {
        c.err(ParseErrorKind::Arity(format!("missing '{connective}' argument")))
    } else {
        c.err(ParseErrorKind::Syntax(format!("expected '{connective}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub analysis: String,
    pub subtasks: Vec<SubTask>,
}

impl Plan {
    pub fn new(analysis: impl Into<String>, subtasks: Vec<SubTask>) -> Result<Self, PlanError> {
        if subtasks.is_empty() {
            return Err(PlanError::EmptyPlan);
        }
        Ok(Self {
            analysis: analysis.into(),
            subtasks,
        })
    }

    pub fn to_document(&self) -> String {
        let mut out = String::from("ANALYSIS:\n");
        if !self.analysis.is_empty() {
            out.push_str(self.analysis.trim_end());
            out.push('\n');
        }
        out.push_str("PLAN:\n");
        for (i, t) in self.subtasks.iter().enumerate() {
            out.push_str(&format!("{}. {t}\n", i + 1));
        }
        out
    }
}

/// Strips markdown decoration models like to wrap headers in.
fn header(line: &str) -> Option<(&'static str, &str)> {
    let t = line.trim().trim_start_matches(['#', '*', ' ']).trim_start();
    for h in ["ANALYSIS:", "PLAN:"] {
        if t.len() >= h.len() && t.is_char_boundary(h.len()) && t[..h.len()].eq_ignore_ascii_case(h) {
            let rest = t[h.len()..].trim_start_matches(['*', ' ']).trim();
            return Some((if h == "PLAN:" { "PLAN" } else { "ANALYSIS" }, rest));
        }
    }
    None
}

fn numbered(line: &str) -> Option<(usize, &str)> {
    let t = line.trim();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let body = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some((t[..digits].parse().ok()?, body.trim()))
}

/// Parses a planner document; errors name the 1-based line.
pub fn parse_plan_document(doc: &str) -> Result<Plan, PlanError> {
    let mut analysis = Vec::new();
    let mut in_analysis = false;
    let mut plan_started = false;
    let mut subtasks = Vec::new();
    for (i, raw) in doc.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.starts_with("```") {
            continue;
        }
        if !plan_started {
            match header(line) {
                Some(("PLAN", rest)) => {
                    plan_started = true;
                    if !rest.is_empty() {
                        return Err(PlanError::Line {
                            line: line_no,
                            message: "text after PLAN: header".into(),
                        });
                    }
                }
                Some((_, rest)) => {
                    in_analysis = true;
                    if !rest.is_empty() {
                        analysis.push(rest.to_string());
                    }
                }
                None if in_analysis => analysis.push(raw.trim_end().to_string()),
                None => {}
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let Some((n, body)) = numbered(line) else {
            return Err(PlanError::Line {
                line: line_no,
                message: format!("expected a numbered sub-task, got {line:?}"),
            });
        };
        let expected = subtasks.len() + 1;
        if n != expected {
            return Err(PlanError::Gap {
                line: line_no,
                expected,
                found: n,
            });
        }
        let task = parse_subtask(body).map_err(|source| PlanError::SubTask {
            line: line_no,
            source,
        })?;
        subtasks.push(task);
    }
    if !plan_started {
        return Err(PlanError::MissingPlan);
    }
    let analysis = analysis.join("\n").trim().to_string();
    Plan::new(analysis, subtasks)
}

const ARTICLES: [&str; 3] = ["the ", "a ", "an "];

/// Lowercases, collapses whitespace and drops a leading article.
pub fn normalize_name(s: &str) -> String {
    let mut t = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    for a in ARTICLES {
        if let Some(rest) = t.strip_prefix(a) {
            t = rest.to_string();
            break;
        }
    }
    t
}

/// Warnings for slot texts that match nothing in the scene vocabulary.
///
/// Matching is a case-insensitive substring test in either direction, so
/// descriptive names ("warm water" vs "water") still pass. Never fails.
pub fn validate_plan(plan: &Plan, vocabulary: &BTreeSet<String>) -> Vec<String> {
    let vocab: Vec<String> = vocabulary
        .iter()
        .map(|v| normalize_name(v))
        .filter(|v| !v.is_empty())
        .collect();
    let mut warnings = Vec::new();
    for (i, t) in plan.subtasks.iter().enumerate() {
        for (role, text) in t.slots() {
            let s = normalize_name(text);
            let hit = vocab.iter().any(|v| s.contains(v.as_str()) || v.contains(s.as_str()));
            if !hit {
                warnings.push(format!(
                    "sub-task {}: {:?} slot {text:?} matches no scene object",
                    i + 1,
                    role
                ));
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pick_up() {
        let t = parse_subtask("pick up [warm water] from [floor]").unwrap();
        assert_eq!(t.verb(), Verb::PickUp);
        assert_eq!(t.object(), "warm water");
        assert_eq!(t.slot(SlotRole::Source), Some("floor"));
    }

    #[test]
    fn parses_turn_off() {
        let t = parse_subtask("turn off [hair straightener]").unwrap();
        assert_eq!(t, SubTask::turn_off("hair straightener").unwrap());
    }

    #[test]
    fn unknown_verb() {
        let e = parse_subtask("grab [apple]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownVerb);
        assert_eq!(e.offset, 0);
        assert!(e.to_string().contains("unknown verb"));
    }

    #[test]
    fn whitespace_and_case() {
        let t = parse_subtask("  PICK   Up [coke]\tFROM  [ floor ]  ").unwrap();
        assert_eq!(format_subtask(&t), "pick up [coke] from [floor]");
        let t = parse_subtask("Place [x]  TO THE [Right Side] of [y]").unwrap();
        assert_eq!(t.relation(), Some(Relation::RightSide));
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_subtask("pick up [coke from [floor]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedBracket);
        assert_eq!(e.offset, 19);
        let e = parse_subtask("turn off [a] [b]").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Arity(_)));
        assert_eq!(e.offset, 13);
        let e = parse_subtask("press [button]").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Arity(_)));
        let e = parse_subtask("pour [scoop] into the [").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedBracket);
        let e = parse_subtask("place [x] on the []").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::EmptySlot);
    }

    #[test]
    fn construction_rejects_brackets() {
        assert!(SubTask::turn_off("a]b").is_err());
        assert!(SubTask::pick_up("", None).is_err());
    }

    #[test]
    fn plan_documents() {
        let p = parse_plan_document("PLAN:\n1. pick up [coke] from [floor]").unwrap();
        assert_eq!(p.analysis, "");
        assert_eq!(p.subtasks.len(), 1);

        let e = parse_plan_document("PLAN:\n1. pick up [a] from [b]\n3. turn off [c]").unwrap_err();
        assert!(e.to_string().contains("gap at line 3"), "{e}");

        assert_eq!(parse_plan_document("ANALYSIS:\nnothing").unwrap_err(), PlanError::MissingPlan);
        assert_eq!(parse_plan_document("PLAN:\n").unwrap_err(), PlanError::EmptyPlan);
        let e = parse_plan_document("PLAN:\n1. grab [x]").unwrap_err();
        assert!(matches!(e, PlanError::SubTask { line: 2, .. }));
    }

    #[test]
    fn document_round_trip() {
        let p = Plan::new(
            "two cups, one warm",
            vec![
                SubTask::pick_up("warm water", Some("floor")).unwrap(),
                SubTask::place("warm water", Relation::RightSide, "empty plate").unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(parse_plan_document(&p.to_document()).unwrap(), p);
    }

    #[test]
    fn tolerates_markdown_headers() {
        let doc = "```\n**ANALYSIS:** the coke on the left is cold\n**PLAN:**\n1) pick up [coke] from [floor]\n```";
        let p = parse_plan_document(doc).unwrap();
        assert_eq!(p.analysis, "the coke on the left is cold");
        assert_eq!(p.subtasks.len(), 1);
    }

    #[test]
    fn vocabulary_warnings() {
        let vocab: BTreeSet<String> = ["cup_1", "warm water", "empty plate", "floor"]
            .into_iter()
            .map(String::from)
            .collect();
        let ok = Plan::new("", vec![SubTask::pick_up("warm water", Some("floor")).unwrap()]).unwrap();
        assert!(validate_plan(&ok, &vocab).is_empty());
        let bad = Plan::new("", vec![SubTask::pick_up("banana", Some("floor")).unwrap()]).unwrap();
        assert_eq!(validate_plan(&bad, &vocab).len(), 1);
    }
}
