//! Demonstration episodes on disk: 15 Hz state/action/image/prompt frames.
//!
//! ```text
//! episode_000007/
//!   meta.json
//!   frames.csv
//!   frames/ext_000000.png
//!   frames/wrist_000000.png
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::executor::Condition;
use crate::sim::{RGB_HEIGHT, RGB_WIDTH};

pub const RECORD_HZ: f64 = 15.0;
/// Allowed relative deviation of the inter-frame interval.
pub const INTERVAL_TOLERANCE: f64 = 0.2;
pub const STATE_LEN: usize = 7;
pub const ACTION_LEN: usize = 8;

const META_FILE: &str = "meta.json";
const FRAMES_FILE: &str = "frames.csv";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("empty episode")]
    EmptyEpisode,
    #[error("no frames in {0}")]
    NoFrames(PathBuf),
    #[error("no episodes under {0}")]
    EmptyRoot(PathBuf),
    #[error("{what} has {got} values, expected {expected}")]
    Dimension { what: &'static str, got: usize, expected: usize },
    #[error("timestamp {t} does not follow {prev}")]
    OutOfOrder { t: f64, prev: f64 },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("frames.csv row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("frame {frame} references missing image {name}")]
    DanglingImage { frame: usize, name: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub state: [f64; STATE_LEN],
    pub action: [f64; ACTION_LEN],
    pub external_image_ref: String,
    pub wrist_image_ref: String,
    pub prompt: String,
}

impl FrameRecord {
    pub fn done(&self) -> f64 {
        self.action[ACTION_LEN - 1]
    }
}

/// Inclusive frame range executed under one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub subtask: String,
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub id: u64,
    pub task_id: u8,
    pub condition: Condition,
    pub seed: u64,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetaFile {
    #[serde(flatten)]
    header: EpisodeHeader,
    finalized: bool,
    frame_count: usize,
    duration_s: f64,
    subtask_spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub task_id: u8,
    pub condition: Condition,
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub subtask_spans: Vec<Span>,
    pub meta: BTreeMap<String, String>,
    /// Directory the episode lives in, when it was written or read from disk.
    pub dir: Option<PathBuf>,
}

impl Episode {
    /// Nominal duration: first to last frame.
    pub fn duration_s(&self) -> f64 {
        self.frames.len().saturating_sub(1) as f64 / RECORD_HZ
    }

    pub fn load_images(&self, frame: usize) -> Result<(RgbImage, RgbImage), DatasetError> {
        let dir = self.dir.as_ref().ok_or_else(|| DatasetError::MissingFile(PathBuf::from("<in-memory episode>")))?;
        let f = &self.frames[frame];
        let load = |name: &str| -> Result<RgbImage, DatasetError> { Ok(image::open(dir.join(name))?.to_rgb8()) };
        Ok((load(&f.external_image_ref)?, load(&f.wrist_image_ref)?))
    }
}

pub fn episode_dir_name(id: u64) -> String {
    format!("episode_{id:06}")
}

/// Groups consecutive frames sharing a prompt.
pub fn spans_from_prompts(frames: &[FrameRecord]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        match spans.last_mut() {
            Some(s) if s.subtask == f.prompt && s.last + 1 == i => s.last = i,
            _ => spans.push(Span {
                subtask: f.prompt.clone(),
                first: i,
                last: i,
            }),
        }
    }
    spans
}

fn csv_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=6).map(|i| format!("q{i}")));
    h.push("gripper".into());
    h.extend((1..=6).map(|i| format!("target_q{i}")));
    h.push("target_gripper".into());
    h.push("done".into());
    h.extend(["prompt", "external_image", "wrist_image"].map(String::from));
    h
}

fn write_meta(dir: &Path, meta: &MetaFile) -> Result<(), DatasetError> {
    let tmp = dir.join("meta.json.tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(serde_json::to_string_pretty(meta)?.as_bytes())?;
    f.sync_all()?;
    fs::rename(tmp, dir.join(META_FILE))?;
    Ok(())
}

/// Streaming writer for one episode directory.
pub struct Recorder {
    dir: PathBuf,
    header: EpisodeHeader,
    frames: Vec<FrameRecord>,
    csv: csv::Writer<File>,
}

/// Creates `root/episode_<id>` and starts a frame log in it.
pub fn open_recorder(root: &Path, header: EpisodeHeader) -> Result<Recorder, DatasetError> {
    let dir = root.join(episode_dir_name(header.id));
    fs::create_dir_all(dir.join("frames"))?;
    write_meta(
        &dir,
        &MetaFile {
            header: header.clone(),
            finalized: false,
            frame_count: 0,
            duration_s: 0.0,
            subtask_spans: Vec::new(),
        },
    )?;
    let mut csv = csv::Writer::from_path(dir.join(FRAMES_FILE))?;
    csv.write_record(csv_header())?;
    csv.flush()?;
    Ok(Recorder {
        dir,
        header,
        frames: Vec::new(),
        csv,
    })
}

impl Recorder {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Writes both images, then the CSV row. A failure leaves earlier frames intact.
    pub fn append_frame(
        &mut self,
        t: f64,
        state: &[f64],
        action: &[f64],
        prompt: &str,
        external: &RgbImage,
        wrist: &RgbImage,
    ) -> Result<(), DatasetError> {
        if state.len() != STATE_LEN {
            return Err(DatasetError::Dimension { what: "state", got: state.len(), expected: STATE_LEN });
        }
        if action.len() != ACTION_LEN {
            return Err(DatasetError::Dimension { what: "action", got: action.len(), expected: ACTION_LEN });
        }
        if !t.is_finite() {
            return Err(DatasetError::OutOfOrder { t, prev: f64::NAN });
        }
        if let Some(prev) = self.frames.last() {
            if t <= prev.t {
                return Err(DatasetError::OutOfOrder { t, prev: prev.t });
            }
        }
        let i = self.frames.len();
        let ext = format!("frames/ext_{i:06}.png");
        let wr = format!("frames/wrist_{i:06}.png");
        external.save(self.dir.join(&ext))?;
        wrist.save(self.dir.join(&wr))?;
        let mut frame = FrameRecord {
            t,
            state: [0.0; STATE_LEN],
            action: [0.0; ACTION_LEN],
            external_image_ref: ext,
            wrist_image_ref: wr,
            prompt: prompt.to_string(),
        };
        frame.state.copy_from_slice(state);
        frame.action.copy_from_slice(action);
        let mut row: Vec<String> = vec![t.to_string()];
        row.extend(state.iter().map(f64::to_string));
        row.extend(action.iter().map(f64::to_string));
        row.push(frame.prompt.clone());
        row.push(frame.external_image_ref.clone());
        row.push(frame.wrist_image_ref.clone());
        self.csv.write_record(&row)?;
        self.csv.flush()?;
        self.frames.push(frame);
        Ok(())
    }

    /// Writes the span index and syncs everything to disk.
    pub fn finalize(mut self) -> Result<Episode, DatasetError> {
        if self.frames.is_empty() {
            return Err(DatasetError::EmptyEpisode);
        }
        self.csv.flush()?;
        self.csv.get_ref().sync_all()?;
        let spans = spans_from_prompts(&self.frames);
        let ep = Episode {
            id: self.header.id,
            task_id: self.header.task_id,
            condition: self.header.condition,
            seed: self.header.seed,
            frames: std::mem::take(&mut self.frames),
            subtask_spans: spans,
            meta: self.header.meta.clone(),
            dir: Some(self.dir.clone()),
        };
        write_meta(
            &self.dir,
            &MetaFile {
                header: self.header,
                finalized: true,
                frame_count: ep.frames.len(),
                duration_s: ep.duration_s(),
                subtask_spans: ep.subtask_spans.clone(),
            },
        )?;
        Ok(ep)
    }
}

fn parse_row(row: &csv::StringRecord, n: usize) -> Result<FrameRecord, DatasetError> {
    let width = 1 + STATE_LEN + ACTION_LEN + 3;
    if row.len() != width {
        return Err(DatasetError::Row { row: n, message: format!("{} columns, expected {width}", row.len()) });
    }
    let num = |i: usize| -> Result<f64, DatasetError> {
        row[i].parse().map_err(|e| DatasetError::Row { row: n, message: format!("column {i}: {e}") })
    };
    let mut state = [0.0; STATE_LEN];
    for (k, v) in state.iter_mut().enumerate() {
        *v = num(1 + k)?;
    }
    let mut action = [0.0; ACTION_LEN];
    for (k, v) in action.iter_mut().enumerate() {
        *v = num(1 + STATE_LEN + k)?;
    }
    let base = 1 + STATE_LEN + ACTION_LEN;
    Ok(FrameRecord {
        t: num(0)?,
        state,
        action,
        prompt: row[base].to_string(),
        external_image_ref: row[base + 1].to_string(),
        wrist_image_ref: row[base + 2].to_string(),
    })
}

/// Reads an episode directory, finalized or not.
pub fn read_episode(dir: &Path) -> Result<Episode, DatasetError> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(DatasetError::MissingFile(meta_path));
    }
    let meta: MetaFile = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let frames_path = dir.join(FRAMES_FILE);
    if !frames_path.is_file() {
        return Err(DatasetError::NoFrames(dir.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(&frames_path)?;
    let mut frames = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Row numbers count the header as row 1.
        let rec = rec.map_err(|e| DatasetError::Row { row: i + 2, message: e.to_string() })?;
        let frame = parse_row(&rec, i + 2)?;
        for name in [&frame.external_image_ref, &frame.wrist_image_ref] {
            if !dir.join(name).is_file() {
                return Err(DatasetError::DanglingImage { frame: i, name: name.clone() });
            }
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(DatasetError::NoFrames(dir.to_path_buf()));
    }
    let subtask_spans = if meta.finalized { meta.subtask_spans } else { spans_from_prompts(&frames) };
    Ok(Episode {
        id: meta.header.id,
        task_id: meta.header.task_id,
        condition: meta.header.condition,
        seed: meta.header.seed,
        frames,
        subtask_spans,
        meta: meta.header.meta,
        dir: Some(dir.to_path_buf()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptShare {
    pub prompt: String,
    pub frames: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub frames: usize,
    pub duration_s: f64,
    pub duration_min: f64,
    pub prompts: Vec<PromptShare>,
}

/// Summary from frame counts alone: duration is frames / 15 Hz.
pub fn stats_from_counts(episodes: usize, per_prompt: &BTreeMap<String, usize>) -> DatasetStats {
    let frames: usize = per_prompt.values().sum();
    let duration_s = frames as f64 / RECORD_HZ;
    let mut prompts: Vec<PromptShare> = per_prompt
        .iter()
        .map(|(p, &n)| PromptShare {
            prompt: p.clone(),
            frames: n,
            share: if frames == 0 { 0.0 } else { n as f64 / frames as f64 },
        })
        .collect();
    prompts.sort_by(|a, b| b.frames.cmp(&a.frames).then_with(|| a.prompt.cmp(&b.prompt)));
    DatasetStats {
        episodes,
        frames,
        duration_s,
        duration_min: duration_s / 60.0,
        prompts,
    }
}

/// Episode directories directly under `root`, sorted.
pub fn episode_dirs(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("episode_")))
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn dataset_stats(root: &Path) -> Result<DatasetStats, DatasetError> {
    let dirs = episode_dirs(root)?;
    if dirs.is_empty() {
        return Err(DatasetError::EmptyRoot(root.to_path_buf()));
    }
    let mut counts = BTreeMap::new();
    for d in &dirs {
        for f in read_episode(d)?.frames {
            *counts.entry(f.prompt).or_insert(0) += 1;
        }
    }
    Ok(stats_from_counts(dirs.len(), &counts))
}

/// Every broken invariant, as readable messages. Images are checked when the
/// episode has a directory.
pub fn validate_episode(ep: &Episode) -> Vec<String> {
    let mut out = Vec::new();
    if ep.frames.is_empty() {
        out.push("episode has no frames".to_string());
        return out;
    }
    let nominal = 1.0 / RECORD_HZ;
    for (i, w) in ep.frames.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            out.push(format!("frame {}: timestamp {} not after {}", i + 1, w[1].t, w[0].t));
        } else if (dt - nominal).abs() > INTERVAL_TOLERANCE * nominal {
            out.push(format!("frame {}: interval {dt:.4} s outside 1/15 s +-20%", i + 1));
        }
    }
    for (i, f) in ep.frames.iter().enumerate() {
        if f.state.iter().chain(&f.action).any(|v| !v.is_finite()) {
            out.push(format!("frame {i}: non-finite value"));
        }
        let d = f.done();
        if d != 0.0 && d != 1.0 {
            out.push(format!("frame {i}: done flag {d} is not binary"));
        }
    }
    let mut next = 0;
    for s in &ep.subtask_spans {
        if s.first != next || s.last < s.first {
            out.push(format!("span {:?} [{}, {}] does not continue at frame {next}", s.subtask, s.first, s.last));
        }
        next = s.last + 1;
        if let Some(frames) = ep.frames.get(s.first..=s.last.min(ep.frames.len() - 1)) {
            if let Some(f) = frames.iter().find(|f| f.prompt != s.subtask) {
                out.push(format!("span {:?} contains a frame prompted {:?}", s.subtask, f.prompt));
            }
            let dones = frames.iter().filter(|f| f.done() == 1.0).count();
            if dones != 1 || frames.last().map(FrameRecord::done) != Some(1.0) {
                out.push(format!("span {:?} has {dones} done frames, expected one on its last frame", s.subtask));
            }
        }
    }
    if next != ep.frames.len() {
        out.push(format!("spans cover {next} of {} frames", ep.frames.len()));
    }
    if let Some(dir) = &ep.dir {
        let ext_dims = match ep.condition {
            Condition::RgbRgb => (RGB_WIDTH as u32, RGB_HEIGHT as u32),
            _ => (crate::thermal::MODEL_INPUT_SIZE as u32, crate::thermal::MODEL_INPUT_SIZE as u32),
        };
        let wrist_dims = (RGB_WIDTH as u32, RGB_HEIGHT as u32);
        for (i, f) in ep.frames.iter().enumerate() {
            for (name, want) in [(&f.external_image_ref, ext_dims), (&f.wrist_image_ref, wrist_dims)] {
                match image::image_dimensions(dir.join(name)) {
                    Ok(d) if d == want => {}
                    Ok(d) => out.push(format!("frame {i}: {name} is {d:?}, expected {want:?}")),
                    Err(e) => out.push(format!("frame {i}: {name}: {e}")),
                }
            }
        }
    }
    out
}
