//! Autoregressive synthesis from the prior, plus the rebalancing adapter
//! that re-draws until a window qualifies as minority-class.

use super::{RvaeError, RvaeModel};
use crate::data::{
    DataError, Env, FrameFeature, SequenceRecord, WindowGenerator, WindowSample, FRAME_DIMS,
};
use crate::numerics::{Mode, Rng};

/// A generated window: frames with binarized labels, plus the raw label
/// sigmoids for callers that need the soft channel.
#[derive(Clone, Debug)]
pub struct GeneratedSequence {
    pub record: SequenceRecord,
    pub raw_labels: Vec<f64>,
}

/// Turn one raw 59-wide decoder output into a valid frame: confidences are
/// clamped into [0, 1], the emotion head is already a distribution, and the
/// label channel is binarized at 0.5.
fn frame_from_output(row: &[f64]) -> FrameFeature {
    let mut frame = FrameFeature::from_flat(row);
    for kp in frame.pose.iter_mut() {
        kp.c = kp.c.clamp(0.0, 1.0);
    }
    frame
}

/// Sample `count` windows of `length` frames each. Every window draws a
/// fresh `z ~ N(0, I)`, seeds the decoder with a frame picked uniformly
/// from `seed_frames`, and feeds its own predictions back at every step.
pub fn generate(
    model: &mut RvaeModel,
    count: usize,
    length: usize,
    rng: &mut Rng,
    seed_frames: &[FrameFeature],
) -> Result<Vec<GeneratedSequence>, RvaeError> {
    if seed_frames.is_empty() {
        return Err(RvaeError::EmptyTrainingSet);
    }
    let latent = model.hyper.latent_dim;
    let prev_mode = model.tape().mode();
    model.tape_mut().set_mode(Mode::Infer);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let z: Vec<f64> = rng.normal_vec(latent, 1.0);
        let seed = &seed_frames[rng.below(seed_frames.len())];
        let mut x: Vec<f64> = seed.flatten().to_vec();

        let tape = model.tape_mut();
        let z_var = tape.constant(z, vec![1, latent]);
        let mut h = model.decoder_init(z_var);
        let mut frames = Vec::with_capacity(length);
        let mut raw_labels = Vec::with_capacity(length);
        for _ in 0..length {
            let tape = model.tape_mut();
            let x_var = tape.constant(x.clone(), vec![1, FRAME_DIMS]);
            let step = model.decode_step_vars(z_var, x_var, h);
            h = step.hidden;
            let raw = model.tape().values(step.frame).to_vec();
            raw_labels.push(raw[FRAME_DIMS - 1]);
            frames.push(frame_from_output(&raw));
            // Feedback stays raw so the decoder sees its own outputs.
            x = raw;
        }
        model.tape_mut().reset();
        out.push(GeneratedSequence {
            record: SequenceRecord::new(format!("gen-{:05}", i), Env::Env1, frames),
            raw_labels,
        });
    }
    model.tape_mut().set_mode(prev_mode);
    Ok(out)
}

/// [`WindowGenerator`] over a trained model. Seeds come from real
/// minority-class frames; a draw is accepted only when at least
/// `min_positive` of its binarized labels are positive, with a bounded
/// number of re-draws per accepted window.
pub struct RvaeSampler<'a> {
    model: &'a mut RvaeModel,
    rng: Rng,
    seed_frames: Vec<FrameFeature>,
    window: usize,
    min_positive: usize,
    max_attempts: usize,
}

impl<'a> RvaeSampler<'a> {
    pub fn new(model: &'a mut RvaeModel, windows: &[WindowSample], min_positive: usize, rng: Rng) -> Self {
        let seed_frames: Vec<FrameFeature> = windows
            .iter()
            .flat_map(|w| w.frames.iter())
            .filter(|f| f.label == 1)
            .cloned()
            .collect();
        let window = model.hyper.window;
        RvaeSampler { model, rng, seed_frames, window, min_positive, max_attempts: 20 }
    }
}

impl WindowGenerator for RvaeSampler<'_> {
    fn generate_windows(&mut self, count: usize) -> Result<Vec<WindowSample>, DataError> {
        if self.seed_frames.is_empty() {
            return Err(DataError::Generator("no minority-class seed frames available".into()));
        }
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let mut accepted = None;
            for _ in 0..self.max_attempts {
                let gen = generate(self.model, 1, self.window, &mut self.rng, &self.seed_frames)
                    .map_err(|e| DataError::Generator(e.to_string()))?
                    .pop()
                    .expect("generate returns exactly one window");
                let positives = gen.record.frames.iter().filter(|f| f.label == 1).count();
                if positives >= self.min_positive {
                    accepted = Some(gen);
                    break;
                }
            }
            let Some(gen) = accepted else {
                return Err(DataError::Generator(format!(
                    "no minority window accepted after {} attempts (window {})",
                    self.max_attempts, i
                )));
            };
            out.push(WindowSample::new(
                format!("vae-{:05}", i),
                Env::Env1,
                0,
                gen.record.frames,
                self.min_positive,
            ));
        }
        Ok(out)
    }
}
