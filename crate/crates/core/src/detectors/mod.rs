//! Frame-level intent classifiers: single-layer GRU and LSTM backbones
//! with a per-step linear head, and a compact transformer encoder with a
//! learnable positional embedding and a LayerNorm + linear head. All three
//! emit one interaction probability per frame of a window.

pub mod train;

pub use train::{train_detector, DetectorHistory, EpochStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{CheckpointError, CheckpointFile};
use crate::data::{FrameFeature, SequenceRecord, WindowSample, EMOTION_DIMS, POSE_DIMS};
use crate::nn::{EncoderBlock, GruCell, LayerNorm, Linear, LstmCell};
use crate::numerics::{Mode, Rng, Tape, Var};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("input width {got} does not match {mode:?} ({expected})")]
    WidthMismatch { mode: InputMode, expected: usize, got: usize },
    #[error("record {id} has {len} frames, need at least {window}")]
    ShortRecord { id: String, len: usize, window: usize },
    #[error("window has {got} frames, model expects {expected}")]
    WrongWindowLength { expected: usize, got: usize },
    #[error("training aborted: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("no training windows given")]
    EmptyTrainingSet,
    #[error("validation windows contain a single frame-label class")]
    SingleClassValidation,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Gru,
    Lstm,
    Transformer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    PoseOnly,
    EmotionOnly,
    Multimodal,
}

impl InputMode {
    pub fn width(&self) -> usize {
        match self {
            InputMode::PoseOnly => POSE_DIMS,
            InputMode::EmotionOnly => EMOTION_DIMS,
            InputMode::Multimodal => POSE_DIMS + EMOTION_DIMS,
        }
    }

    /// Detector inputs never include the label channel.
    pub fn extract(&self, frame: &FrameFeature) -> Vec<f64> {
        let flat = frame.flatten();
        match self {
            InputMode::PoseOnly => flat[..POSE_DIMS].to_vec(),
            InputMode::EmotionOnly => flat[POSE_DIMS..POSE_DIMS + EMOTION_DIMS].to_vec(),
            InputMode::Multimodal => flat[..POSE_DIMS + EMOTION_DIMS].to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub backbone: Backbone,
    pub input_mode: InputMode,
    pub hidden: usize,
    pub blocks: usize,
    pub heads: usize,
    pub window: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            backbone: Backbone::Gru,
            input_mode: InputMode::Multimodal,
            hidden: 96,
            blocks: 1,
            heads: 4,
            window: 15,
            lr: 1e-3,
            batch_size: 64,
            epochs: 200,
            patience: 50,
        }
    }
}

impl DetectorConfig {
    /// The hidden sizes used for the headline comparisons: pose-only 256,
    /// emotion-only 16, multimodal 96 for the recurrent backbones and 256
    /// for the transformer.
    pub fn comparable(backbone: Backbone, input_mode: InputMode) -> Self {
        let hidden = match (backbone, input_mode) {
            (_, InputMode::PoseOnly) => 256,
            (_, InputMode::EmotionOnly) => 16,
            (Backbone::Transformer, InputMode::Multimodal) => 256,
            (_, InputMode::Multimodal) => 96,
        };
        DetectorConfig { backbone, input_mode, hidden, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 || self.window < 2 || self.epochs == 0 || self.batch_size == 0 {
            return Err("hidden, window, epochs and batch_size must all be positive".into());
        }
        if self.backbone == Backbone::Transformer {
            if self.blocks != 1 {
                return Err(format!("the transformer uses a single encoder block, got {}", self.blocks));
            }
            if self.heads == 0 || self.hidden % self.heads != 0 {
                return Err(format!("heads ({}) must divide the hidden width ({})", self.heads, self.hidden));
            }
        }
        Ok(())
    }
}

enum DetectorArch {
    Gru { cell: GruCell, head: Linear },
    Lstm { cell: LstmCell, head: Linear },
    Transformer { proj: Linear, pos_embedding: Var, block: EncoderBlock, norm: LayerNorm, head: Linear },
}

pub struct Detector {
    pub config: DetectorConfig,
    tape: Tape,
    arch: DetectorArch,
}

impl Detector {
    pub fn new(config: DetectorConfig, rng: &mut Rng) -> Self {
        config.validate().unwrap_or_else(|e| panic!("invalid detector config: {}", e));
        let mut tape = Tape::new();
        let width = config.input_mode.width();
        let arch = match config.backbone {
            Backbone::Gru => DetectorArch::Gru {
                cell: GruCell::new(&mut tape, "det.gru", width, config.hidden, rng),
                head: Linear::new(&mut tape, "det.head", config.hidden, 1, rng),
            },
            Backbone::Lstm => DetectorArch::Lstm {
                cell: LstmCell::new(&mut tape, "det.lstm", width, config.hidden, rng),
                head: Linear::new(&mut tape, "det.head", config.hidden, 1, rng),
            },
            Backbone::Transformer => {
                let proj = Linear::new(&mut tape, "det.proj", width, config.hidden, rng);
                let pos_embedding = tape.param(
                    "det.pos_embedding",
                    rng.normal_vec(config.window * config.hidden, 0.02),
                    vec![config.window, config.hidden],
                );
                let block = EncoderBlock::new(&mut tape, "det.block0", config.hidden, config.heads, rng);
                let norm = LayerNorm::new(&mut tape, "det.out_norm", config.hidden);
                let head = Linear::new(&mut tape, "det.out_head", config.hidden, 1, rng);
                DetectorArch::Transformer { proj, pos_embedding, block, norm, head }
            }
        };
        Detector { config, tape, arch }
    }

    /// The model's tape, for optimizer wiring and gradient checks.
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    /// Per-frame probabilities for a batch, plus the frame labels aligned
    /// with the probability rows. Recurrent backbones run time-major over
    /// the batch; the transformer attends within each window. The result
    /// stays differentiable until the next tape reset.
    pub fn forward_batch(&mut self, windows: &[&WindowSample]) -> (Var, Vec<f64>) {
        let b = windows.len();
        let t = self.config.window;
        let width = self.config.input_mode.width();
        match &self.arch {
            DetectorArch::Gru { cell, head } => {
                let cell = cell.clone();
                let head = head.clone();
                let (packed, labels) = self.pack_time_major(windows);
                let mut h = cell.zero_state(&mut self.tape, b);
                let mut step_probs = Vec::with_capacity(t);
                for step in 0..t {
                    let xt = self.tape.slice_rows(packed, step * b, b);
                    h = cell.step(&mut self.tape, xt, h);
                    let logit = head.forward(&mut self.tape, h);
                    step_probs.push(self.tape.sigmoid(logit));
                }
                (self.stack_rows(&step_probs), labels)
            }
            DetectorArch::Lstm { cell, head } => {
                let cell = cell.clone();
                let head = head.clone();
                let (packed, labels) = self.pack_time_major(windows);
                let (mut h, mut c) = cell.zero_state(&mut self.tape, b);
                let mut step_probs = Vec::with_capacity(t);
                for step in 0..t {
                    let xt = self.tape.slice_rows(packed, step * b, b);
                    let (h2, c2) = cell.step(&mut self.tape, xt, h, c);
                    h = h2;
                    c = c2;
                    let logit = head.forward(&mut self.tape, h);
                    step_probs.push(self.tape.sigmoid(logit));
                }
                (self.stack_rows(&step_probs), labels)
            }
            DetectorArch::Transformer { proj, pos_embedding, block, norm, head } => {
                let proj = proj.clone();
                let pos_embedding = *pos_embedding;
                let block = block.clone();
                let norm = norm.clone();
                let head = head.clone();
                let mut window_probs = Vec::with_capacity(b);
                let mut labels = Vec::with_capacity(b * t);
                for w in windows {
                    let rows: Vec<f64> =
                        w.frames.iter().flat_map(|f| self.config.input_mode.extract(f)).collect();
                    labels.extend(w.frames.iter().map(|f| f.label as f64));
                    let x = self.tape.constant(rows, vec![t, width]);
                    let projected = proj.forward(&mut self.tape, x);
                    let positioned = self.tape.add(projected, pos_embedding);
                    let encoded = block.forward(&mut self.tape, positioned);
                    let normed = norm.forward(&mut self.tape, encoded);
                    let logits = head.forward(&mut self.tape, normed);
                    window_probs.push(self.tape.sigmoid(logits));
                }
                let all = if window_probs.len() == 1 {
                    window_probs[0]
                } else {
                    let transposed: Vec<Var> =
                        window_probs.iter().map(|&p| self.tape.transpose(p)).collect();
                    let wide = self.tape.concat_cols(&transposed);
                    // [1, b·t] of window-major probabilities; reshape via
                    // transpose to a [b·t, 1] column.
                    self.tape.transpose(wide)
                };
                (all, labels)
            }
        }
    }

    /// Pack the batch time-major and collect labels in the same row order.
    fn pack_time_major(&mut self, windows: &[&WindowSample]) -> (Var, Vec<f64>) {
        let b = windows.len();
        let t = self.config.window;
        let width = self.config.input_mode.width();
        let mut values = vec![0.0; t * b * width];
        let mut labels = vec![0.0; t * b];
        for (bi, w) in windows.iter().enumerate() {
            for (step, frame) in w.frames.iter().enumerate() {
                let row = step * b + bi;
                values[row * width..(row + 1) * width].copy_from_slice(&self.config.input_mode.extract(frame));
                labels[row] = frame.label as f64;
            }
        }
        (self.tape.constant(values, vec![t * b, width]), labels)
    }

    fn stack_rows(&mut self, steps: &[Var]) -> Var {
        if steps.len() == 1 {
            return steps[0];
        }
        let transposed: Vec<Var> = steps.iter().map(|&s| self.tape.transpose(s)).collect();
        let wide = self.tape.concat_cols(&transposed);
        self.tape.transpose(wide)
    }

    /// Per-frame probabilities for one window given raw feature rows.
    /// Validates the row width against the input mode.
    pub fn forward_rows(&mut self, rows: &[Vec<f64>]) -> Result<Vec<f64>, DetectorError> {
        let width = self.config.input_mode.width();
        for row in rows {
            if row.len() != width {
                return Err(DetectorError::WidthMismatch {
                    mode: self.config.input_mode,
                    expected: width,
                    got: row.len(),
                });
            }
        }
        if rows.len() != self.config.window {
            return Err(DetectorError::WrongWindowLength { expected: self.config.window, got: rows.len() });
        }
        // Teach the window machinery nothing about labels: wrap the rows in
        // plain frames with zeroed extras, since extraction reads only the
        // configured channels.
        let frames: Vec<FrameFeature> = rows
            .iter()
            .map(|row| {
                let mut flat = vec![0.0; crate::data::FRAME_DIMS];
                match self.config.input_mode {
                    InputMode::PoseOnly => flat[..POSE_DIMS].copy_from_slice(row),
                    InputMode::EmotionOnly => flat[POSE_DIMS..POSE_DIMS + EMOTION_DIMS].copy_from_slice(row),
                    InputMode::Multimodal => flat[..POSE_DIMS + EMOTION_DIMS].copy_from_slice(row),
                }
                FrameFeature::from_flat(&flat)
            })
            .collect();
        let window = WindowSample { record_id: String::new(), env: crate::data::Env::Env1, start: 0, frames, label: 0 };
        Ok(self.predict_window(&window))
    }

    /// Per-frame probabilities for one window, in inference mode.
    pub fn predict_window(&mut self, window: &WindowSample) -> Vec<f64> {
        assert_eq!(
            window.len(),
            self.config.window,
            "predict_window: window has {} frames, model expects {}",
            window.len(),
            self.config.window
        );
        let prev = self.tape.mode();
        self.tape.set_mode(Mode::Infer);
        let (probs, _) = self.forward_batch(&[window]);
        let out = self.tape.values(probs).to_vec();
        self.tape.set_mode(prev);
        self.tape.reset();
        out
    }

    /// Per-frame probabilities over a whole record: overlapping windows at
    /// the given stride (plus a tail window flush with the last frame) are
    /// averaged per frame.
    pub fn predict_sequence(&mut self, record: &SequenceRecord, stride: usize) -> Result<Vec<f64>, DetectorError> {
        let t = self.config.window;
        if record.frames.len() < t {
            return Err(DetectorError::ShortRecord {
                id: record.id.clone(),
                len: record.frames.len(),
                window: t,
            });
        }
        assert!(stride >= 1, "predict_sequence: stride must be at least 1, got {}", stride);
        let last_start = record.frames.len() - t;
        let mut starts: Vec<usize> = (0..=last_start).step_by(stride).collect();
        if *starts.last().unwrap() != last_start {
            starts.push(last_start);
        }
        let mut sums = vec![0.0; record.frames.len()];
        let mut counts = vec![0usize; record.frames.len()];
        for start in starts {
            let window = WindowSample {
                record_id: record.id.clone(),
                env: record.env,
                start,
                frames: record.frames[start..start + t].to_vec(),
                label: 0,
            };
            let probs = self.predict_window(&window);
            for (offset, &p) in probs.iter().enumerate() {
                sums[start + offset] += p;
                counts[start + offset] += 1;
            }
        }
        Ok(sums.iter().zip(&counts).map(|(&s, &c)| s / c as f64).collect())
    }

    // ── persistence ──────────────────────────────────────────────────

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), DetectorError> {
        let hyper = serde_json::to_value(&self.config)
            .map_err(|e| CheckpointError::Parse(e.to_string()))?;
        let file = CheckpointFile::from_tape("detector", hyper, None, &self.tape);
        file.save(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DetectorError> {
        let file = CheckpointFile::load(path)?;
        if file.kind != "detector" {
            return Err(DetectorError::Checkpoint(CheckpointError::Mismatch(format!(
                "expected a detector checkpoint, found kind {:?}",
                file.kind
            ))));
        }
        let config: DetectorConfig = serde_json::from_value(file.hyper.clone())
            .map_err(|e| CheckpointError::Parse(e.to_string()))?;
        let mut rng = Rng::seed_from(0);
        let mut detector = Detector::new(config, &mut rng);
        file.restore_into(&mut detector.tape)?;
        Ok(detector)
    }
}
