use std::collections::BTreeMap;
use std::fs;

use image::RgbImage;
use proptest::prelude::*;
use thermoact::dataset::{
    dataset_stats, open_recorder, read_episode, validate_episode, DatasetError, Episode, EpisodeHeader, Recorder,
    RECORD_HZ,
};
use thermoact::executor::Condition;

fn header(id: u64) -> EpisodeHeader {
    let mut meta = BTreeMap::new();
    meta.insert("operator".to_string(), "sim".to_string());
    EpisodeHeader {
        id,
        task_id: 2,
        condition: Condition::Rgbt,
        seed: 17,
        meta,
    }
}

fn images(i: usize) -> (RgbImage, RgbImage) {
    let ext = RgbImage::from_fn(256, 256, |x, y| image::Rgb([(x + i as u32) as u8, y as u8, 7]));
    let wrist = RgbImage::from_fn(640, 480, |x, y| image::Rgb([x as u8, (y + i as u32) as u8, 99]));
    (ext, wrist)
}

/// Writes `prompts.len()` frames at exact 1/15 s spacing; the last frame of
/// each prompt run carries done = 1.
fn write(root: &std::path::Path, id: u64, prompts: &[&str]) -> Recorder {
    let mut r = open_recorder(root, header(id)).unwrap();
    for (i, p) in prompts.iter().enumerate() {
        let done = if prompts.get(i + 1) != Some(p) { 1.0 } else { 0.0 };
        let state: Vec<f64> = (0..7).map(|k| 0.1 * k as f64 + i as f64 / 7.0).collect();
        let mut action: Vec<f64> = (0..7).map(|k| -0.3 * k as f64 + 1.0 / (i + 3) as f64).collect();
        action[6] = 1.0;
        action.push(done);
        let (ext, wrist) = images(i);
        r.append_frame(i as f64 / RECORD_HZ, &state, &action, p, &ext, &wrist).unwrap();
    }
    r
}

#[test]
fn round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = ["pick up [coke] from [floor]"; 4]
        .into_iter()
        .chain(["place [coke] to the [right side] of [empty plate]"; 3])
        .collect::<Vec<_>>();
    let ep = write(tmp.path(), 1, &prompts).finalize().unwrap();
    let back = read_episode(ep.dir.as_ref().unwrap()).unwrap();
    assert_eq!(back, ep);
    assert_eq!(back.subtask_spans.len(), 2);
    assert_eq!((back.subtask_spans[1].first, back.subtask_spans[1].last), (4, 6));
    for i in 0..prompts.len() {
        assert_eq!(back.load_images(i).unwrap(), images(i));
    }
    assert!(validate_episode(&back).is_empty(), "{:?}", validate_episode(&back));
}

#[test]
fn duration_of_150_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let ep = write(tmp.path(), 2, &["press [the button] on [ice maker]"; 150]).finalize().unwrap();
    assert!((ep.duration_s() - 149.0 / 15.0).abs() < 1e-12);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ep.dir.as_ref().unwrap().join("meta.json")).unwrap()).unwrap();
    assert!((meta["duration_s"].as_f64().unwrap() - 9.933).abs() < 5e-4);
    assert_eq!(meta["frame_count"], 150);
}

#[test]
fn stats_of_a_one_second_episode() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), 3, &["pick up [coke] from [floor]"; 15]).finalize().unwrap();
    let s = dataset_stats(tmp.path()).unwrap();
    assert_eq!((s.episodes, s.frames), (1, 15));
    assert!((s.duration_s - 1.0).abs() < 1e-12);
    assert_eq!(s.prompts[0].share, 1.0);
}

#[test]
fn empty_root_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(dataset_stats(tmp.path()), Err(DatasetError::EmptyRoot(_))));
}

#[test]
fn truncated_csv_names_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let ep = write(tmp.path(), 4, &["p"; 5]).finalize().unwrap();
    let csv = ep.dir.as_ref().unwrap().join("frames.csv");
    let text = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, &text[..text.len() - 40]).unwrap();
    let err = read_episode(ep.dir.as_ref().unwrap()).unwrap_err();
    assert!(matches!(err, DatasetError::Row { row: 6, .. }), "{err}");
    assert!(err.to_string().contains("row 6"));
}

#[test]
fn meta_only_directory_has_no_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let ep = write(tmp.path(), 5, &["p"; 2]).finalize().unwrap();
    let dir = ep.dir.unwrap();
    fs::remove_file(dir.join("frames.csv")).unwrap();
    let err = read_episode(&dir).unwrap_err();
    assert!(matches!(err, DatasetError::NoFrames(_)));
    assert!(err.to_string().starts_with("no frames"));
}

#[test]
fn dangling_image_refs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let ep = write(tmp.path(), 6, &["p"; 3]).finalize().unwrap();
    let dir = ep.dir.unwrap();
    fs::remove_file(dir.join("frames/wrist_000002.png")).unwrap();
    assert!(matches!(read_episode(&dir), Err(DatasetError::DanglingImage { frame: 2, .. })));
}

#[test]
fn unfinalized_prefix_is_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let r = write(tmp.path(), 7, &["a", "a", "b"]);
    let dir = r.dir().to_path_buf();
    // Dropped without finalize, as after a crash.
    drop(r);
    let ep = read_episode(&dir).unwrap();
    assert_eq!(ep.frames.len(), 3);
    assert_eq!(ep.subtask_spans.len(), 2);
}

fn edited(ep: &Episode, f: impl FnOnce(&mut Episode)) -> Episode {
    let mut e = ep.clone();
    e.dir = None;
    f(&mut e);
    e
}

#[test]
fn validator_flags_timing_and_done() {
    let tmp = tempfile::tempdir().unwrap();
    let ep = write(tmp.path(), 8, &["a", "a", "a", "b", "b"]).finalize().unwrap();
    assert!(validate_episode(&ep).is_empty());

    let gap = edited(&ep, |e| {
        for f in &mut e.frames[2..] {
            f.t += 0.2 - 1.0 / 15.0;
        }
    });
    let v = validate_episode(&gap);
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(v[0].contains("interval"));

    let half = edited(&ep, |e| e.frames[1].action[7] = 0.5);
    assert!(validate_episode(&half).iter().any(|m| m.contains("not binary")));

    let early = edited(&ep, |e| e.frames[0].action[7] = 1.0);
    assert!(validate_episode(&early).iter().any(|m| m.contains("done frames")));
}

#[test]
fn validator_checks_image_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let ep = write(tmp.path(), 9, &["a", "a"]).finalize().unwrap();
    RgbImage::new(256, 256).save(ep.dir.as_ref().unwrap().join("frames/wrist_000001.png")).unwrap();
    let v = validate_episode(&ep);
    assert_eq!(v.len(), 1);
    assert!(v[0].contains("wrist_000001"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn arbitrary_frames_round_trip(
        rows in prop::collection::vec(
            (prop::array::uniform7(-3.0f64..3.0), prop::array::uniform8(-3.0f64..3.0), 0usize..3),
            1..12,
        ),
        dt in 0.001f64..0.5,
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let mut r = open_recorder(tmp.path(), header(42)).unwrap();
        let small = RgbImage::from_pixel(4, 3, image::Rgb([1, 2, 3]));
        let prompts = ["pick up [a] from [floor]", "pour [scoop] into [coke], please", "say \"hi\""];
        for (i, (s, a, p)) in rows.iter().enumerate() {
            r.append_frame(i as f64 * dt, s, a, prompts[*p], &small, &small).unwrap();
        }
        let ep = r.finalize().unwrap();
        prop_assert_eq!(read_episode(ep.dir.as_ref().unwrap()).unwrap(), ep);
    }
}
