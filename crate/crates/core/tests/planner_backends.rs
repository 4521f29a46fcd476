mod common;

use thermoact::plan::{format_subtask, parse_plan_document, validate_plan, Plan, SubTask};
use thermoact::planner::{
    mock_plan, remote_plan, scene_vocabulary, PlannerError, PlannerRequest, COLD_THRESHOLD_C,
};
use thermoact::sim::{scene_from_task, ObjectClass, Scene, TASKS};

fn instruction(task: u8) -> &'static str {
    TASKS[task as usize - 1].instruction
}

fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn task2_branch_matches_the_coldest_can() {
    for seed in 0..200 {
        let s = scene_from_task(2, seed).unwrap();
        let coldest = s
            .objects
            .iter()
            .filter(|o| o.class == ObjectClass::CokeCan)
            .map(|o| o.temperature)
            .fold(f64::INFINITY, f64::min);
        let plan = mock_plan(&s, instruction(2)).unwrap();
        assert_eq!(plan.subtasks.len() == 2, coldest <= COLD_THRESHOLD_C, "seed {seed}");
        if plan.subtasks.len() == 5 {
            assert_eq!(
                format_subtask(plan.subtasks.last().unwrap()),
                "place [ice cup] to the [right side] of [empty plate]"
            );
        }
    }
}

#[test]
fn mock_plans_round_trip_and_validate_cleanly() {
    for task in 1..=5 {
        for seed in 0..30 {
            let s = scene_from_task(task, seed).unwrap();
            let plan = mock_plan(&s, instruction(task)).unwrap();
            assert_eq!(parse_plan_document(&plan.to_document()).unwrap(), plan);
            let warnings = validate_plan(&plan, &scene_vocabulary(&s));
            assert!(warnings.is_empty(), "task {task} seed {seed}: {warnings:?}");
            assert_eq!(mock_plan(&s, instruction(task)).unwrap(), plan);
        }
    }
}

#[test]
fn task1_needs_a_warm_cup() {
    let mut s = scene_from_task(1, 0).unwrap();
    let plan = mock_plan(&s, instruction(1)).unwrap();
    assert_eq!(format_subtask(&plan.subtasks[0]), "pick up [warm water] from [floor]");
    assert_eq!(plan.subtasks.len(), 4);
    for o in &mut s.objects {
        o.temperature = s.ambient;
    }
    let err = mock_plan(&s, instruction(1)).unwrap_err();
    assert!(matches!(&err, PlannerError::Planning(m) if m == "no warm cup"), "{err}");
}

#[test]
fn task5_turns_off_only_hot_appliances() {
    let mut s = scene_from_task(5, 1).unwrap();
    assert_eq!(format_subtask(&mock_plan(&s, instruction(5)).unwrap().subtasks[0]), "turn off [hair straightener]");
    for o in s.objects.iter_mut().filter(|o| o.powered.is_some()) {
        o.powered = Some(false);
        o.temperature = s.ambient;
    }
    let plan = mock_plan(&s, instruction(5)).unwrap();
    assert_eq!(plan.subtasks.len(), 2);
}

#[test]
fn unknown_instructions_are_rejected() {
    let s = scene_from_task(1, 0).unwrap();
    assert!(matches!(mock_plan(&s, "bake a cake"), Err(PlannerError::UnknownInstruction(_))));
}

fn request(scene: &Scene) -> PlannerRequest {
    PlannerRequest::from_scene(scene, instruction(2)).unwrap()
}

fn fixture_plan() -> Plan {
    Plan::new(
        "Coke at 16 C.",
        vec![
            SubTask::pick_up("coke", Some("floor")).unwrap(),
            SubTask::place("coke", thermoact::plan::Relation::RightSide, "empty plate").unwrap(),
        ],
    )
    .unwrap()
}

#[test]
fn remote_plan_parses_the_served_document() {
    let s = scene_from_task(2, 0).unwrap().with_test_mode();
    let (url, bodies) = common::serve(vec![chat_reply(&fixture_plan().to_document())]);
    let plan = remote_plan(&request(&s), &url, 5.0).unwrap();
    assert_eq!(plan, fixture_plan());
    let sent: serde_json::Value = serde_json::from_str(&bodies.recv().unwrap()).unwrap();
    let msgs = sent["messages"].as_array().unwrap();
    assert!(msgs[0]["content"].as_str().unwrap().contains("OUTPUT FORMAT:"));
    let parts = msgs[1]["content"].as_array().unwrap();
    assert_eq!(parts[0]["text"], instruction(2));
    assert_eq!(parts.len(), 3);
}

#[test]
fn remote_plan_retries_once() {
    let s = scene_from_task(2, 0).unwrap().with_test_mode();
    let (url, bodies) = common::serve(vec![chat_reply("sure!"), chat_reply(&fixture_plan().to_document())]);
    assert_eq!(remote_plan(&request(&s), &url, 5.0).unwrap(), fixture_plan());
    bodies.recv().unwrap();
    let second: serde_json::Value = serde_json::from_str(&bodies.recv().unwrap()).unwrap();
    assert_eq!(second["messages"].as_array().unwrap().len(), 4);
}

#[test]
fn remote_plan_gives_up_after_two_bad_replies() {
    let s = scene_from_task(2, 0).unwrap().with_test_mode();
    let (url, _) = common::serve(vec![chat_reply("no idea"), chat_reply("still no idea")]);
    match remote_plan(&request(&s), &url, 5.0) {
        Err(PlannerError::PlannerOutput { raw, .. }) => assert_eq!(raw, "still no idea"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn remote_plan_times_out() {
    let s = scene_from_task(2, 0).unwrap().with_test_mode();
    let err = remote_plan(&request(&s), &common::black_hole(), 0.001).unwrap_err();
    assert!(matches!(err, PlannerError::Timeout), "{err}");
}

#[test]
fn request_checks_image_sizes() {
    let s = scene_from_task(2, 0).unwrap().with_test_mode();
    let r = request(&s);
    let small = image::RgbImage::new(64, 64);
    let err = PlannerRequest::new("x", r.external_pseudocolor.clone(), small, r.guideline.clone()).unwrap_err();
    assert!(matches!(err, PlannerError::Request(_)));
}
