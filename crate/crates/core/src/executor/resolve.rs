//! Grounding slot text ("warm water", "the scoop", "coke/hot water") to a
//! scene object id.

use rand::Rng;

use super::{ExecError, ObjectView, SceneView};
use crate::sim::ObjectClass;

/// Temperatures closer than this count as a tie.
pub const TIE_TOLERANCE_C: f64 = 0.5;

const ARTICLES: [&str; 4] = ["a", "an", "the", "some"];
const HOT_WORDS: [&str; 7] = ["warm", "hot", "heated", "overheated", "warmest", "hottest", "hotter"];
const COLD_WORDS: [&str; 5] = ["cold", "cool", "chilled", "coldest", "colder"];

/// Which candidate to prefer once the class match is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Hottest,
    Coldest,
    /// Furthest from ambient in either direction.
    Salient,
}

/// Keywords a destination should contain for each kind of scoop contents.
fn affinity(content: ObjectClass) -> &'static [&'static str] {
    match content {
        ObjectClass::TeaBag => &["hot", "warm", "tea"],
        ObjectClass::Lemon => &["coke", "cola", "soda"],
        _ => &[],
    }
}

/// Picks one alternative of "a/b" using what the scoop (or held object) carries.
fn pick_alternative<'a>(alternatives: &[&'a str], view: &SceneView) -> &'a str {
    let contents: Vec<ObjectClass> = view
        .attached()
        .into_iter()
        .chain(view.objects.iter().filter(|o| o.class == ObjectClass::Scoop))
        .flat_map(|o| o.contents.iter().copied())
        .collect();
    for c in contents {
        let keys = affinity(c);
        if let Some(alt) = alternatives.iter().find(|a| keys.iter().any(|k| a.contains(k))) {
            return alt;
        }
    }
    alternatives[0]
}

/// Splits slot text into the bare noun phrase and a selector.
fn parse_slot(slot: &str) -> (String, Selector) {
    let mut selector = Selector::Salient;
    let words: Vec<&str> = slot
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .filter(|w| {
            if HOT_WORDS.contains(w) {
                selector = Selector::Hottest;
                false
            } else if COLD_WORDS.contains(w) {
                selector = Selector::Coldest;
                false
            } else {
                true
            }
        })
        .collect();
    (words.join(" "), selector)
}

fn contains_phrase(haystack: &str, needle: &str) -> bool {
    format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// Length of the longest name of `o` that matches `noun`, 0 if none does.
fn match_score(noun: &str, o: &ObjectView) -> usize {
    [o.appearance.as_str(), o.class.display_name()]
        .into_iter()
        .filter(|name| !name.is_empty())
        .filter(|name| contains_phrase(noun, name) || contains_phrase(name, noun))
        .map(|name| name.len())
        .max()
        .unwrap_or(0)
}

/// All objects the slot could equally well denote given what the view shows.
pub fn acceptable_targets(slot: &str, view: &SceneView) -> Result<Vec<String>, ExecError> {
    let text = slot.trim().to_lowercase();
    let alternatives: Vec<&str> = text.split('/').map(str::trim).filter(|a| !a.is_empty()).collect();
    if alternatives.is_empty() {
        return Err(ExecError::Resolution(slot.to_string()));
    }
    let chosen = if alternatives.len() > 1 {
        pick_alternative(&alternatives, view)
    } else {
        alternatives[0]
    };
    let (noun, selector) = parse_slot(chosen);
    let scored: Vec<(usize, &ObjectView)> = view.objects.iter().map(|o| (match_score(&noun, o), o)).collect();
    let best = scored.iter().map(|(s, _)| *s).max().unwrap_or(0);
    if best == 0 {
        return Err(ExecError::Resolution(slot.to_string()));
    }
    let candidates: Vec<&ObjectView> = scored.into_iter().filter(|(s, _)| *s == best).map(|(_, o)| o).collect();
    let key = |o: &ObjectView| match selector {
        Selector::Hottest => o.temperature,
        Selector::Coldest => -o.temperature,
        Selector::Salient => (o.temperature - view.ambient).abs(),
    };
    let top = candidates.iter().map(|o| key(o)).fold(f64::NEG_INFINITY, f64::max);
    let mut ids: Vec<String> = candidates
        .into_iter()
        .filter(|o| top - key(o) <= TIE_TOLERANCE_C)
        .map(|o| o.id.clone())
        .collect();
    ids.sort();
    Ok(ids)
}

/// Resolves a slot to one object, breaking ties with `rng`.
pub fn resolve_target<R: Rng + ?Sized>(slot: &str, view: &SceneView, rng: &mut R) -> Result<String, ExecError> {
    let mut ids = acceptable_targets(slot, view)?;
    let i = if ids.len() == 1 { 0 } else { rng.random_range(0..ids.len()) };
    Ok(ids.swap_remove(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::Condition;
    use crate::sim::scene_from_task;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slot_parsing() {
        assert_eq!(parse_slot("the warm water"), ("water".into(), Selector::Hottest));
        assert_eq!(parse_slot("overheated battery"), ("battery".into(), Selector::Hottest));
        assert_eq!(parse_slot("cold coke"), ("coke".into(), Selector::Coldest));
        assert_eq!(parse_slot("an apple"), ("apple".into(), Selector::Salient));
        assert_eq!(parse_slot("ice cup"), ("ice cup".into(), Selector::Salient));
    }

    #[test]
    fn longest_name_wins() {
        let s = scene_from_task(1, 2).unwrap();
        let v = SceneView::new(&s, Condition::Rgbt);
        assert_eq!(acceptable_targets("empty plate", &v).unwrap(), vec!["plate_empty".to_string()]);
        let fruit = acceptable_targets("fruit plate", &v).unwrap();
        assert!(fruit.iter().all(|id| id.starts_with("plate_fruit")));
    }

    #[test]
    fn warm_cup_under_each_condition() {
        let s = scene_from_task(1, 5).unwrap();
        let warm = s.objects.iter().find(|o| o.label == "warm water").unwrap().id.clone();
        let v = SceneView::new(&s, Condition::Rgbt);
        assert_eq!(acceptable_targets("warm water", &v).unwrap(), vec![warm]);
        let v = SceneView::new(&s, Condition::RgbRgb);
        assert_eq!(acceptable_targets("warm water", &v).unwrap().len(), 3);
    }

    #[test]
    fn disjunction_follows_scoop_contents() {
        for seed in 0..20 {
            let s = scene_from_task(3, seed).unwrap();
            let v = SceneView::new(&s, Condition::Rgbt);
            let ids = acceptable_targets("coke/hot water", &v).unwrap();
            assert_eq!(ids.len(), 1);
            let label = &s.object(&ids[0]).unwrap().label;
            let tea = s.object("scoop").unwrap().contents[0] == ObjectClass::TeaBag;
            assert_eq!(label, if tea { "hot water" } else { "coke" });
        }
    }

    #[test]
    fn missing_object() {
        let s = scene_from_task(1, 1).unwrap();
        let v = SceneView::new(&s, Condition::Rgbt);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(resolve_target("banana", &v, &mut rng), Err(ExecError::Resolution(_))));
    }
}
