//! Dataset model: per-frame multimodal features, sequence records, pose
//! normalization and standardization, fixed-length windowing, splits, and
//! class rebalancing through a pluggable window generator.

pub mod io;
pub mod split;
pub mod synthetic;

pub use io::{load_dataset, load_standardizer, save_dataset, save_standardizer};
pub use split::{stratified_kfold, two_split_heldout, FoldSplit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of tracked body keypoints.
pub const KEYPOINTS: usize = 17;
/// Pose channel width: x, y, confidence per keypoint.
pub const POSE_DIMS: usize = 3 * KEYPOINTS;
/// Number of coordinate channels that get standardized (x, y per keypoint).
pub const COORD_DIMS: usize = 2 * KEYPOINTS;
/// Emotion distribution width.
pub const EMOTION_DIMS: usize = 7;
/// Full frame width: pose + emotion + intent label.
pub const FRAME_DIMS: usize = POSE_DIMS + EMOTION_DIMS + 1;

/// Default window length in frames.
pub const DEFAULT_WINDOW: usize = 15;
/// Default number of positive frames that make a window positive.
pub const DEFAULT_MIN_POSITIVE: usize = 7;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {field}: {message}")]
    Malformed { line: usize, field: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("window generator failed: {0}")]
    Generator(String),
}

/// One detected keypoint: coordinates plus detector confidence.
/// Serializes as a bare `[x, y, c]` triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "(f64, f64, f64)", from = "(f64, f64, f64)")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub c: f64,
}

impl From<Keypoint> for (f64, f64, f64) {
    fn from(k: Keypoint) -> Self {
        (k.x, k.y, k.c)
    }
}

impl From<(f64, f64, f64)> for Keypoint {
    fn from((x, y, c): (f64, f64, f64)) -> Self {
        Keypoint { x, y, c }
    }
}

/// Recording environment tag. Serializes as `1 | 2 | 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Env {
    Env1,
    Env2,
    Env3,
}

impl From<Env> for u8 {
    fn from(e: Env) -> u8 {
        match e {
            Env::Env1 => 1,
            Env::Env2 => 2,
            Env::Env3 => 3,
        }
    }
}

impl TryFrom<u8> for Env {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Env::Env1),
            2 => Ok(Env::Env2),
            3 => Ok(Env::Env3),
            other => Err(format!("environment must be 1, 2 or 3, got {}", other)),
        }
    }
}

/// One frame's features: box-normalized pose with confidences, an emotion
/// probability vector, and the binary intent label. Flattens to
/// [`FRAME_DIMS`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFeature {
    pub pose: [Keypoint; KEYPOINTS],
    pub emotion: [f64; EMOTION_DIMS],
    pub label: u8,
}

impl FrameFeature {
    /// Flatten to `[x1, y1, c1, …, x17, y17, c17, e1..e7, label]`.
    pub fn flatten(&self) -> [f64; FRAME_DIMS] {
        let mut out = [0.0; FRAME_DIMS];
        for (m, kp) in self.pose.iter().enumerate() {
            out[3 * m] = kp.x;
            out[3 * m + 1] = kp.y;
            out[3 * m + 2] = kp.c;
        }
        out[POSE_DIMS..POSE_DIMS + EMOTION_DIMS].copy_from_slice(&self.emotion);
        out[FRAME_DIMS - 1] = self.label as f64;
        out
    }

    /// Rebuild from a flattened vector, clamping nothing: the caller is
    /// responsible for invariants (see [`FrameFeature::validate`]).
    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len(), FRAME_DIMS, "frame vector must have {} entries, got {}", FRAME_DIMS, flat.len());
        let mut pose = [Keypoint { x: 0.0, y: 0.0, c: 0.0 }; KEYPOINTS];
        for (m, kp) in pose.iter_mut().enumerate() {
            kp.x = flat[3 * m];
            kp.y = flat[3 * m + 1];
            kp.c = flat[3 * m + 2];
        }
        let mut emotion = [0.0; EMOTION_DIMS];
        emotion.copy_from_slice(&flat[POSE_DIMS..POSE_DIMS + EMOTION_DIMS]);
        let label = if flat[FRAME_DIMS - 1] >= 0.5 { 1 } else { 0 };
        FrameFeature { pose, emotion, label }
    }

    /// Check the frame invariants: emotion entries non-negative and summing
    /// to one within 1e-6, confidences in [0, 1], label binary.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.label > 1 {
            return Err(("label".into(), format!("label must be 0 or 1, got {}", self.label)));
        }
        let sum: f64 = self.emotion.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(("emotion".into(), format!("entries sum to {}, expected 1 ± 1e-6", sum)));
        }
        if let Some(e) = self.emotion.iter().find(|&&e| e < 0.0) {
            return Err(("emotion".into(), format!("negative entry {}", e)));
        }
        for (m, kp) in self.pose.iter().enumerate() {
            if !(0.0..=1.0).contains(&kp.c) {
                return Err((format!("pose[{}]", m), format!("confidence {} outside [0, 1]", kp.c)));
            }
            if !kp.x.is_finite() || !kp.y.is_finite() {
                return Err((format!("pose[{}]", m), "non-finite coordinate".into()));
            }
        }
        Ok(())
    }
}

/// Pixel-space detector output for one frame, before box normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub pose_px: [Keypoint; KEYPOINTS],
    pub bbox: BBox,
    pub emotion: [f64; EMOTION_DIMS],
    pub label: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub w: f64,
    pub h: f64,
}

/// Map pixel keypoints into the person box's unit square. Confidences and
/// emotions pass through unchanged; coordinates outside [0, 1] are legal.
pub fn normalize_pose(raw: &RawFrame) -> Result<FrameFeature, DataError> {
    if raw.bbox.w <= 0.0 || raw.bbox.h <= 0.0 {
        return Err(DataError::Invalid(format!(
            "normalize_pose: bounding box has non-positive size w={}, h={}",
            raw.bbox.w, raw.bbox.h
        )));
    }
    let mut pose = raw.pose_px;
    for kp in pose.iter_mut() {
        kp.x = (kp.x - raw.bbox.x_min) / raw.bbox.w;
        kp.y = (kp.y - raw.bbox.y_min) / raw.bbox.h;
    }
    Ok(FrameFeature { pose, emotion: raw.emotion, label: raw.label })
}

/// An ordered sequence of frames from one tracked person in one recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecord {
    pub id: String,
    pub env: Env,
    pub frames: Vec<FrameFeature>,
    /// First frame whose label is positive; derived, never serialized.
    #[serde(skip)]
    pub onset_index: Option<usize>,
}

impl SequenceRecord {
    pub fn new(id: String, env: Env, frames: Vec<FrameFeature>) -> Self {
        let onset_index = frames.iter().position(|f| f.label == 1);
        SequenceRecord { id, env, frames, onset_index }
    }

    pub fn recompute_onset(&mut self) {
        self.onset_index = self.frames.iter().position(|f| f.label == 1);
    }

    pub fn has_positive(&self) -> bool {
        self.onset_index.is_some()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.frames.iter().map(|f| f.label).collect()
    }
}

/// A fixed-length slice of a record carrying its ground-truth window label.
/// The decoder input view is frames `1..T−1` and the next-step target view
/// is frames `2..T` (zero-based `[..T−1]` and `[1..]`).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub record_id: String,
    pub env: Env,
    pub start: usize,
    pub frames: Vec<FrameFeature>,
    pub label: u8,
}

impl WindowSample {
    pub fn new(record_id: String, env: Env, start: usize, frames: Vec<FrameFeature>, min_positive: usize) -> Self {
        let label = window_label(&frames, min_positive);
        WindowSample { record_id, env, start, frames, label }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn input_view(&self) -> &[FrameFeature] {
        &self.frames[..self.frames.len() - 1]
    }

    pub fn target_view(&self) -> &[FrameFeature] {
        &self.frames[1..]
    }
}

/// Ground-truth rule: a window is positive when it contains at least
/// `min_positive` positive frames, anywhere in the window.
pub fn window_label(frames: &[FrameFeature], min_positive: usize) -> u8 {
    let positives = frames.iter().filter(|f| f.label == 1).count();
    (positives >= min_positive) as u8
}

/// Result of windowing a record set.
#[derive(Debug)]
pub struct WindowingOutcome {
    pub windows: Vec<WindowSample>,
    /// Records shorter than the window length, skipped with a warning count.
    pub skipped_records: usize,
}

/// Slide a `window`-frame view over every record at the given stride. A
/// trailing window ending on the last frame is added when the stride does
/// not land there exactly, so every frame of a long-enough record is
/// covered.
pub fn window_sequences(
    records: &[SequenceRecord],
    window: usize,
    stride: usize,
    min_positive: usize,
) -> WindowingOutcome {
    assert!(window >= 2, "window_sequences: window must be at least 2, got {}", window);
    assert!(stride >= 1, "window_sequences: stride must be at least 1, got {}", stride);
    let mut windows = Vec::new();
    let mut skipped = 0;
    for record in records {
        if record.frames.len() < window {
            skipped += 1;
            continue;
        }
        let last_start = record.frames.len() - window;
        let mut starts: Vec<usize> = (0..=last_start).step_by(stride).collect();
        if *starts.last().unwrap() != last_start {
            starts.push(last_start);
        }
        for start in starts {
            windows.push(WindowSample::new(
                record.id.clone(),
                record.env,
                start,
                record.frames[start..start + window].to_vec(),
                min_positive,
            ));
        }
    }
    WindowingOutcome { windows, skipped_records: skipped }
}

/// Per-coordinate z-normalization statistics for the 34 box-normalized
/// pose coordinates, fitted from training frames only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Floor applied to fitted standard deviations so constant coordinates do
/// not divide by zero.
pub const STD_FLOOR: f64 = 1e-6;

impl Standardizer {
    pub fn fit<'a>(frames: impl IntoIterator<Item = &'a FrameFeature>) -> Result<Standardizer, DataError> {
        let mut n = 0usize;
        let mut sum = vec![0.0; COORD_DIMS];
        let mut sum_sq = vec![0.0; COORD_DIMS];
        for frame in frames {
            for (m, kp) in frame.pose.iter().enumerate() {
                sum[2 * m] += kp.x;
                sum[2 * m + 1] += kp.y;
                sum_sq[2 * m] += kp.x * kp.x;
                sum_sq[2 * m + 1] += kp.y * kp.y;
            }
            n += 1;
        }
        if n < 2 {
            return Err(DataError::Invalid(format!(
                "standardizer: need at least 2 training frames, got {}",
                n
            )));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(&sq, &mu)| ((sq / nf - mu * mu).max(0.0)).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply_frame(&self, frame: &FrameFeature) -> FrameFeature {
        let mut out = frame.clone();
        for (m, kp) in out.pose.iter_mut().enumerate() {
            kp.x = (kp.x - self.mean[2 * m]) / self.std[2 * m];
            kp.y = (kp.y - self.mean[2 * m + 1]) / self.std[2 * m + 1];
        }
        out
    }

    pub fn apply_record(&self, record: &SequenceRecord) -> SequenceRecord {
        SequenceRecord::new(
            record.id.clone(),
            record.env,
            record.frames.iter().map(|f| self.apply_frame(f)).collect(),
        )
    }

    pub fn apply_records(&self, records: &[SequenceRecord]) -> Vec<SequenceRecord> {
        records.iter().map(|r| self.apply_record(r)).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.mean.len() != COORD_DIMS || self.std.len() != COORD_DIMS {
            return Err(DataError::Invalid(format!(
                "standardizer: expected {} means and stds, got {} and {}",
                COORD_DIMS,
                self.mean.len(),
                self.std.len()
            )));
        }
        if let Some(s) = self.std.iter().find(|&&s| s <= 0.0) {
            return Err(DataError::Invalid(format!("standardizer: non-positive std {}", s)));
        }
        Ok(())
    }
}

/// Source of synthetic minority-class windows for rebalancing.
pub trait WindowGenerator {
    fn generate_windows(&mut self, count: usize) -> Result<Vec<WindowSample>, DataError>;
}

/// Append synthetic positive windows until the positive fraction reaches
/// `target_positive_fraction`. Originals are never removed or reordered.
pub fn rebalance(
    windows: &[WindowSample],
    generator: &mut dyn WindowGenerator,
    target_positive_fraction: f64,
) -> Result<Vec<WindowSample>, DataError> {
    if !(0.0..1.0).contains(&target_positive_fraction) || target_positive_fraction == 0.0 {
        return Err(DataError::Invalid(format!(
            "rebalance: target positive fraction must be in (0, 1), got {}",
            target_positive_fraction
        )));
    }
    let n = windows.len();
    let positives = windows.iter().filter(|w| w.label == 1).count();
    let mut out = windows.to_vec();
    if n == 0 || positives as f64 / n as f64 >= target_positive_fraction {
        return Ok(out);
    }
    let needed = ((target_positive_fraction * n as f64 - positives as f64)
        / (1.0 - target_positive_fraction))
        .ceil() as usize;
    let synthetic = generator.generate_windows(needed)?;
    if synthetic.len() < needed {
        return Err(DataError::Generator(format!(
            "requested {} windows, generator produced {}",
            needed,
            synthetic.len()
        )));
    }
    for (i, w) in synthetic.iter().enumerate() {
        if w.label != 1 {
            return Err(DataError::Generator(format!("window {} is not minority-class", i)));
        }
        for (j, frame) in w.frames.iter().enumerate() {
            if let Err((field, msg)) = frame.validate() {
                return Err(DataError::Generator(format!("window {} frame {}: {}: {}", i, j, field, msg)));
            }
        }
    }
    out.extend(synthetic);
    Ok(out)
}

#[cfg(test)]
mod tests;
