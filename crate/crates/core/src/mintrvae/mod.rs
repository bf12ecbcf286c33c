//! Multimodal recurrent variational autoencoder over pose+emotion+label
//! frame windows: MLP front-end and GRU encoder to a sequence-level latent,
//! autoregressive GRU decoder with per-modality output heads, the combined
//! loss, both training schedules, and synthetic window generation.

pub mod generate;
pub mod loss;
pub mod train;

pub use generate::{GeneratedSequence, RvaeSampler};
pub use loss::{
    beta_schedule, emotion_loss, huber, kl_free_bits, label_loss, pose_loss, reparameterize,
    teacher_forcing_select, teacher_forcing_tau,
};
pub use train::{train, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{CheckpointError, CheckpointFile};
use crate::data::{FrameFeature, Standardizer, WindowSample, EMOTION_DIMS, FRAME_DIMS, POSE_DIMS};
use crate::nn::{GruCell, Linear, MlpBlock};
use crate::numerics::{Mode, Rng, Tape, Var};

#[derive(Debug, Error)]
pub enum RvaeError {
    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no training windows given")]
    EmptyTrainingSet,
    #[error("window has {got} frames, model expects {expected}")]
    WrongWindowLength { expected: usize, got: usize },
    #[error("frame row has width {got}, expected {expected}")]
    WrongFrameWidth { expected: usize, got: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// All training hyperparameters. Defaults reproduce the full-scale
/// settings; `scaled` shrinks the epoch-denominated ones for desk runs
/// while preserving schedule shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RvaeHyper {
    pub lambda_pose: f64,
    pub lambda_emotion: f64,
    pub lambda_label: f64,
    pub beta_max: f64,
    pub warmup_epochs: usize,
    pub free_bits: f64,
    pub confidence_floor: f64,
    pub huber_delta: f64,
    pub latent_dim: usize,
    pub mlp_dims: [usize; 3],
    pub pose_coord_weight: f64,
    pub pose_conf_weight: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    /// Hidden width of the encoder and decoder GRUs (not pinned upstream).
    pub rnn_hidden: usize,
    /// Width of the decoder input projection.
    pub decoder_proj: usize,
    /// Window length T.
    pub window: usize,
}

impl Default for RvaeHyper {
    fn default() -> Self {
        RvaeHyper {
            lambda_pose: 20.0,
            lambda_emotion: 10.0,
            lambda_label: 1.0,
            beta_max: 0.8,
            warmup_epochs: 5000,
            free_bits: 0.1,
            confidence_floor: 0.1,
            huber_delta: 1.0,
            latent_dim: 32,
            mlp_dims: [256, 128, 64],
            pose_coord_weight: 0.8,
            pose_conf_weight: 0.2,
            batch_size: 64,
            epochs: 700,
            lr: 1e-3,
            weight_decay: 1e-5,
            dropout_rate: 0.2,
            rnn_hidden: 64,
            decoder_proj: 64,
            window: 15,
        }
    }
}

impl RvaeHyper {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda_pose < 0.0 || self.lambda_emotion < 0.0 || self.lambda_label < 0.0 || self.beta_max < 0.0 {
            return Err("loss weights must be non-negative".into());
        }
        if self.latent_dim < 1 {
            return Err("latent_dim must be at least 1".into());
        }
        if (self.pose_coord_weight + self.pose_conf_weight - 1.0).abs() > 1e-12 {
            return Err(format!(
                "pose_coord_weight + pose_conf_weight must be 1, got {} + {}",
                self.pose_coord_weight, self.pose_conf_weight
            ));
        }
        if self.window < 2 {
            return Err("window must be at least 2".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err("epochs and batch_size must be positive".into());
        }
        Ok(())
    }

    /// Multiply the epoch-denominated settings by `factor` (at least one
    /// epoch), keeping the warm-up fraction of training unchanged.
    pub fn scaled(&self, factor: f64) -> RvaeHyper {
        let mut out = self.clone();
        out.epochs = ((self.epochs as f64 * factor).round() as usize).max(1);
        out.warmup_epochs = (self.warmup_epochs as f64 * factor).round() as usize;
        out
    }
}

/// Per-epoch loss components. `total` always equals the weighted sum of
/// the four parts under the recorded `beta_used`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pose: f64,
    pub emotion: f64,
    pub label: f64,
    pub kl: f64,
    pub total: f64,
    pub beta_used: f64,
    pub tau_used: f64,
}

struct RvaeArch {
    enc_mlp: Vec<MlpBlock>,
    enc_gru: GruCell,
    mu_head: Linear,
    logvar_head: Linear,
    dec_in_proj: Linear,
    dec_init: Linear,
    dec_gru: GruCell,
    dec_shared: Linear,
    pose_head: Linear,
    emotion_head: Linear,
    label_head: Linear,
}

impl RvaeArch {
    fn build(tape: &mut Tape, hyper: &RvaeHyper, rng: &mut Rng) -> Self {
        let [d1, d2, d3] = hyper.mlp_dims;
        let enc_mlp = vec![
            MlpBlock::new(tape, "enc.mlp0", FRAME_DIMS, d1, hyper.dropout_rate, rng),
            MlpBlock::new(tape, "enc.mlp1", d1, d2, hyper.dropout_rate, rng),
            MlpBlock::new(tape, "enc.mlp2", d2, d3, hyper.dropout_rate, rng),
        ];
        let enc_gru = GruCell::new(tape, "enc.gru", d3, hyper.rnn_hidden, rng);
        let mu_head = Linear::new(tape, "enc.mu", hyper.rnn_hidden, hyper.latent_dim, rng);
        let logvar_head = Linear::new(tape, "enc.logvar", hyper.rnn_hidden, hyper.latent_dim, rng);
        let dec_in_proj = Linear::new(tape, "dec.in_proj", FRAME_DIMS, hyper.decoder_proj, rng);
        let dec_init = Linear::new(tape, "dec.init", hyper.latent_dim, hyper.rnn_hidden, rng);
        let dec_gru =
            GruCell::new(tape, "dec.gru", hyper.decoder_proj + hyper.latent_dim, hyper.rnn_hidden, rng);
        let dec_shared = Linear::new(tape, "dec.shared", hyper.rnn_hidden, d3, rng);
        let pose_head = Linear::new(tape, "dec.pose", d3, POSE_DIMS, rng);
        let emotion_head = Linear::new(tape, "dec.emotion", d3, EMOTION_DIMS, rng);
        let label_head = Linear::new(tape, "dec.label", d3, 1, rng);
        RvaeArch {
            enc_mlp,
            enc_gru,
            mu_head,
            logvar_head,
            dec_in_proj,
            dec_init,
            dec_gru,
            dec_shared,
            pose_head,
            emotion_head,
            label_head,
        }
    }
}

/// One decoder step's outputs, split per modality and re-concatenated.
pub(crate) struct DecodeOut {
    pub pose: Var,
    pub emotion: Var,
    pub label: Var,
    pub frame: Var,
    pub hidden: Var,
}

pub struct RvaeModel {
    pub hyper: RvaeHyper,
    pub standardizer: Option<Standardizer>,
    tape: Tape,
    arch: RvaeArch,
}

impl RvaeModel {
    pub fn new(hyper: RvaeHyper, rng: &mut Rng) -> Self {
        hyper.validate().unwrap_or_else(|e| panic!("invalid hyperparameters: {}", e));
        let mut tape = Tape::new();
        let arch = RvaeArch::build(&mut tape, &hyper, rng);
        RvaeModel { hyper, standardizer: None, tape, arch }
    }

    /// The model's tape, for optimizer wiring and gradient checks.
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    /// Pack frames into a time-major `[(steps)·batch, width]` constant:
    /// row `t·B + b` is window `b`'s frame `t`.
    fn pack_time_major(tape: &mut Tape, windows: &[&WindowSample]) -> (Var, usize, usize) {
        let batch = windows.len();
        let steps = windows[0].len() - 1;
        let mut values = vec![0.0; steps * batch * FRAME_DIMS];
        for (b, w) in windows.iter().enumerate() {
            for (t, frame) in w.input_view().iter().enumerate() {
                let row = t * batch + b;
                values[row * FRAME_DIMS..(row + 1) * FRAME_DIMS].copy_from_slice(&frame.flatten());
            }
        }
        let var = tape.constant(values, vec![steps * batch, FRAME_DIMS]);
        (var, steps, batch)
    }

    /// Run the encoder over a packed input, returning `(μ, log σ²)` vars of
    /// shape `[batch, latent]`.
    pub(crate) fn encode_vars(&mut self, packed: Var, steps: usize, batch: usize, rng: &mut Rng) -> (Var, Var) {
        let tape = &mut self.tape;
        let mut h = packed;
        for block in &self.arch.enc_mlp {
            h = block.forward(tape, h, rng);
        }
        let mut state = self.arch.enc_gru.zero_state(tape, batch);
        for t in 0..steps {
            let xt = tape.slice_rows(h, t * batch, batch);
            state = self.arch.enc_gru.step(tape, xt, state);
        }
        let mu = self.arch.mu_head.forward(tape, state);
        let logvar = self.arch.logvar_head.forward(tape, state);
        (mu, logvar)
    }

    /// Encode one window's input view to its latent posterior parameters.
    /// Runs in inference mode and leaves the tape clean.
    pub fn encode(&mut self, frames: &[FrameFeature]) -> Result<(Vec<f64>, Vec<f64>), RvaeError> {
        let expected = self.hyper.window - 1;
        if frames.len() != expected {
            return Err(RvaeError::WrongWindowLength { expected, got: frames.len() });
        }
        let rows: Vec<Vec<f64>> = frames.iter().map(|f| f.flatten().to_vec()).collect();
        self.encode_rows(&rows)
    }

    /// Encoder entry point over raw rows; validates the frame width.
    pub fn encode_rows(&mut self, rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), RvaeError> {
        for row in rows {
            if row.len() != FRAME_DIMS {
                return Err(RvaeError::WrongFrameWidth { expected: FRAME_DIMS, got: row.len() });
            }
        }
        let steps = rows.len();
        let prev_mode = self.tape.mode();
        self.tape.set_mode(Mode::Infer);
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        let packed = self.tape.constant(flat, vec![steps, FRAME_DIMS]);
        let mut rng = Rng::seed_from(0);
        let (mu, logvar) = self.encode_vars(packed, steps, 1, &mut rng);
        let out = (self.tape.values(mu).to_vec(), self.tape.values(logvar).to_vec());
        self.tape.set_mode(prev_mode);
        self.tape.reset();
        Ok(out)
    }

    /// Initial decoder hidden state from the latent.
    pub(crate) fn decoder_init(&mut self, z: Var) -> Var {
        let pre = self.arch.dec_init.forward(&mut self.tape, z);
        self.tape.tanh(pre)
    }

    /// One decoder step in-graph: previous frame plus latent in, next-frame
    /// estimate and new hidden state out.
    pub(crate) fn decode_step_vars(&mut self, z: Var, x_prev: Var, h_prev: Var) -> DecodeOut {
        let tape = &mut self.tape;
        let projected = self.arch.dec_in_proj.forward(tape, x_prev);
        let gru_in = tape.concat_cols(&[projected, z]);
        let hidden = self.arch.dec_gru.step(tape, gru_in, h_prev);
        let shared_pre = self.arch.dec_shared.forward(tape, hidden);
        let shared = tape.relu(shared_pre);
        let pose = self.arch.pose_head.forward(tape, shared);
        let emotion_logits = self.arch.emotion_head.forward(tape, shared);
        let emotion = tape.softmax(emotion_logits);
        let label_logit = self.arch.label_head.forward(tape, shared);
        let label = tape.sigmoid(label_logit);
        let frame = tape.concat_cols(&[pose, emotion, label]);
        DecodeOut { pose, emotion, label, frame, hidden }
    }

    /// One decoder step on plain slices, in inference mode. Returns the
    /// predicted 59-wide frame and the next hidden state.
    pub fn decode_step(&mut self, z: &[f64], x_prev: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>), RvaeError> {
        if x_prev.len() != FRAME_DIMS {
            return Err(RvaeError::WrongFrameWidth { expected: FRAME_DIMS, got: x_prev.len() });
        }
        let prev_mode = self.tape.mode();
        self.tape.set_mode(Mode::Infer);
        let z_var = self.tape.constant(z.to_vec(), vec![1, z.len()]);
        let x_var = self.tape.constant(x_prev.to_vec(), vec![1, FRAME_DIMS]);
        let h_var = self.tape.constant(h_prev.to_vec(), vec![1, h_prev.len()]);
        let out = self.decode_step_vars(z_var, x_var, h_var);
        let frame = self.tape.values(out.frame).to_vec();
        let hidden = self.tape.values(out.hidden).to_vec();
        self.tape.set_mode(prev_mode);
        self.tape.reset();
        Ok((frame, hidden))
    }

    /// Build the full loss graph for a batch of windows under the given
    /// schedule values. Returns the scalar total plus the breakdown.
    pub(crate) fn batch_loss(
        &mut self,
        batch: &[&WindowSample],
        beta: f64,
        tau: f64,
        rng: &mut Rng,
    ) -> (Var, LossBreakdown) {
        let (packed_in, steps, b) = Self::pack_time_major(&mut self.tape, batch);
        let (mu, logvar) = self.encode_vars(packed_in, steps, b, rng);
        let z = reparameterize(&mut self.tape, mu, logvar, rng);
        let mut h = self.decoder_init(z);

        // Per-step targets, time-major like the inputs.
        let mut target_pose = vec![0.0; steps * b * POSE_DIMS];
        let mut target_emotion = vec![0.0; steps * b * EMOTION_DIMS];
        let mut target_label = vec![0.0; steps * b];
        for (bi, w) in batch.iter().enumerate() {
            for (t, frame) in w.target_view().iter().enumerate() {
                let flat = frame.flatten();
                let row = t * b + bi;
                target_pose[row * POSE_DIMS..(row + 1) * POSE_DIMS].copy_from_slice(&flat[..POSE_DIMS]);
                target_emotion[row * EMOTION_DIMS..(row + 1) * EMOTION_DIMS]
                    .copy_from_slice(&flat[POSE_DIMS..POSE_DIMS + EMOTION_DIMS]);
                target_label[row] = flat[FRAME_DIMS - 1];
            }
        }

        let mut pose_steps = Vec::with_capacity(steps);
        let mut emotion_steps = Vec::with_capacity(steps);
        let mut label_steps = Vec::with_capacity(steps);
        let mut prev_pred: Option<Var> = None;
        for t in 0..steps {
            let truth = self.tape.slice_rows(packed_in, t * b, b);
            let x_in = match prev_pred {
                // The first step is always seeded with the ground-truth frame.
                None => truth,
                Some(pred) => teacher_forcing_select(&self.tape, truth, pred, tau, rng),
            };
            let out = self.decode_step_vars(z, x_in, h);
            h = out.hidden;
            prev_pred = Some(out.frame);
            pose_steps.push(out.pose);
            emotion_steps.push(out.emotion);
            label_steps.push(out.label);
        }

        // Stack the per-step head outputs back into time-major matrices so
        // each loss sees all frames at once.
        let pose_rows = self.stack_rows(&pose_steps);
        let emotion_rows = self.stack_rows(&emotion_steps);
        let label_rows = self.stack_rows(&label_steps);

        let pose = pose_loss(
            &mut self.tape,
            pose_rows,
            &target_pose,
            self.hyper.confidence_floor,
            self.hyper.huber_delta,
            self.hyper.pose_coord_weight,
            self.hyper.pose_conf_weight,
        );
        let emotion = emotion_loss(&mut self.tape, emotion_rows, &target_emotion);
        let label = label_loss(&mut self.tape, label_rows, &target_label);
        let kl = kl_free_bits(&mut self.tape, mu, logvar, self.hyper.free_bits);

        let tape = &mut self.tape;
        let pose_w = tape.scale(pose, self.hyper.lambda_pose);
        let emotion_w = tape.scale(emotion, self.hyper.lambda_emotion);
        let label_w = tape.scale(label, self.hyper.lambda_label);
        let kl_w = tape.scale(kl, beta);
        let s1 = tape.add(pose_w, emotion_w);
        let s2 = tape.add(s1, label_w);
        let total = tape.add(s2, kl_w);

        let breakdown = LossBreakdown {
            pose: tape.scalar(pose),
            emotion: tape.scalar(emotion),
            label: tape.scalar(label),
            kl: tape.scalar(kl),
            total: tape.scalar(total),
            beta_used: beta,
            tau_used: tau,
        };
        (total, breakdown)
    }

    /// Concatenate per-step `[b, w]` outputs into `[steps·b, w]` without
    /// leaving the graph: transpose-concat-transpose.
    fn stack_rows(&mut self, steps: &[Var]) -> Var {
        let tape = &mut self.tape;
        let transposed: Vec<Var> = steps.iter().map(|&s| tape.transpose(s)).collect();
        let wide = tape.concat_cols(&transposed);
        tape.transpose(wide)
    }

    /// Loss breakdown of one window at the given epoch's schedule values.
    /// Gradients stay available on the tape until the next reset.
    pub fn total_loss(&mut self, window: &WindowSample, epoch: usize, rng: &mut Rng) -> Result<LossBreakdown, RvaeError> {
        if window.len() != self.hyper.window {
            return Err(RvaeError::WrongWindowLength { expected: self.hyper.window, got: window.len() });
        }
        let beta = beta_schedule(epoch, self.hyper.beta_max, self.hyper.warmup_epochs);
        let tau = teacher_forcing_tau(epoch, self.hyper.epochs);
        let (_, breakdown) = self.batch_loss(&[window], beta, tau, rng);
        self.tape.reset();
        Ok(breakdown)
    }

    /// Differentiable one-window loss for gradient verification: builds the
    /// full training graph at the given schedule values and returns the
    /// scalar total without resetting the tape.
    pub fn batch_loss_for_check(
        &mut self,
        window: &WindowSample,
        beta: f64,
        tau: f64,
        rng: &mut Rng,
    ) -> (Var, LossBreakdown) {
        self.batch_loss(&[window], beta, tau, rng)
    }

    /// Teacher-forced next-frame reconstruction of one window in inference
    /// mode with `z = μ`. Returns the `T−1` predicted frames, each 59 wide.
    pub fn predict_next_frames(&mut self, window: &WindowSample) -> Result<Vec<Vec<f64>>, RvaeError> {
        if window.len() != self.hyper.window {
            return Err(RvaeError::WrongWindowLength { expected: self.hyper.window, got: window.len() });
        }
        let prev_mode = self.tape.mode();
        self.tape.set_mode(Mode::Infer);
        let mut rng = Rng::seed_from(0);
        let (packed, steps, b) = Self::pack_time_major(&mut self.tape, &[window]);
        let (mu, _) = self.encode_vars(packed, steps, b, &mut rng);
        let mut h = self.decoder_init(mu);
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let truth = self.tape.slice_rows(packed, t * b, b);
            let step = self.decode_step_vars(mu, truth, h);
            h = step.hidden;
            out.push(self.tape.values(step.frame).to_vec());
        }
        self.tape.set_mode(prev_mode);
        self.tape.reset();
        Ok(out)
    }

    // ── persistence ──────────────────────────────────────────────────

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), RvaeError> {
        let hyper = serde_json::to_value(&self.hyper)
            .map_err(|e| CheckpointError::Parse(e.to_string()))?;
        let file = CheckpointFile::from_tape("rvae", hyper, self.standardizer.clone(), &self.tape);
        file.save(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, RvaeError> {
        let file = CheckpointFile::load(path)?;
        if file.kind != "rvae" {
            return Err(RvaeError::Checkpoint(CheckpointError::Mismatch(format!(
                "expected an rvae checkpoint, found kind {:?}",
                file.kind
            ))));
        }
        let hyper: RvaeHyper = serde_json::from_value(file.hyper.clone())
            .map_err(|e| CheckpointError::Parse(e.to_string()))?;
        let mut rng = Rng::seed_from(0);
        let mut model = RvaeModel::new(hyper, &mut rng);
        file.restore_into(&mut model.tape)?;
        model.standardizer = file.standardizer.clone();
        Ok(model)
    }
}
