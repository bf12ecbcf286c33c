//! Deterministic synthetic scene generator used by the demo CLI and the
//! test benches. Simulates a person in box-normalized coordinates: idle
//! sway for non-interacting sequences, and an arm-raise-plus-lean cue with
//! an emotion shift after the intent onset for interacting ones.

use super::{Env, FrameFeature, Keypoint, SequenceRecord, WindowSample, EMOTION_DIMS, KEYPOINTS};
use crate::numerics::Rng;

/// Resting skeleton template in box coordinates (COCO-17 order).
const TEMPLATE: [(f64, f64); KEYPOINTS] = [
    (0.50, 0.08), // nose
    (0.46, 0.06), // left eye
    (0.54, 0.06), // right eye
    (0.42, 0.08), // left ear
    (0.58, 0.08), // right ear
    (0.35, 0.22), // left shoulder
    (0.65, 0.22), // right shoulder
    (0.30, 0.38), // left elbow
    (0.70, 0.38), // right elbow
    (0.28, 0.54), // left wrist
    (0.72, 0.54), // right wrist
    (0.40, 0.52), // left hip
    (0.60, 0.52), // right hip
    (0.39, 0.73), // left knee
    (0.61, 0.73), // right knee
    (0.38, 0.95), // left ankle
    (0.62, 0.95), // right ankle
];

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub sequences: usize,
    pub frames_per_sequence: usize,
    /// Fraction of sequences that contain an intent onset.
    pub positive_fraction: f64,
    pub env: Env,
    /// Coordinate jitter amplitude.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sequences: 40,
            frames_per_sequence: 60,
            positive_fraction: 0.55,
            env: Env::Env1,
            noise: 0.02,
        }
    }
}

fn emotion_from_logits(logits: &[f64; EMOTION_DIMS]) -> [f64; EMOTION_DIMS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; EMOTION_DIMS];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}

/// Per-sequence interaction style: which arm reaches, how far, how fast,
/// and which way the torso leans. The variety makes the positive class a
/// manifold rather than a single prototype.
struct Cue {
    left: bool,
    right: bool,
    amplitude: f64,
    speed: f64,
    lean: f64,
}

impl Cue {
    fn draw(rng: &mut Rng) -> Cue {
        let (left, right) = match rng.below(5) {
            0 | 1 => (true, false),
            2 | 3 => (false, true),
            _ => (true, true),
        };
        Cue {
            left,
            right,
            amplitude: 0.7 + 0.6 * rng.uniform(),
            speed: 6.0 + 8.0 * rng.uniform(),
            lean: if rng.bernoulli(0.5) { 1.0 } else { -1.0 },
        }
    }
}

fn frame_at(
    t: usize,
    onset: Option<usize>,
    sway_phase: f64,
    cue: &Cue,
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> FrameFeature {
    let after = onset.map(|o| t >= o).unwrap_or(false);
    // Progress of the interaction cue, saturating `speed` frames after onset.
    let progress = onset
        .map(|o| if t >= o { ((t - o) as f64 / cue.speed).min(1.0) } else { 0.0 })
        .unwrap_or(0.0);
    let reach = cue.amplitude * progress;
    let sway = 0.015 * (0.35 * t as f64 + sway_phase).sin();
    let lean = 0.06 * cue.lean * reach;
    let mut pose = [Keypoint { x: 0.0, y: 0.0, c: 0.0 }; KEYPOINTS];
    for (m, kp) in pose.iter_mut().enumerate() {
        let (tx, ty) = TEMPLATE[m];
        let mut x = tx + sway + rng.normal() * cfg.noise;
        let mut y = ty + rng.normal() * cfg.noise;
        // Reaching cue: the chosen arm rises and extends toward the camera.
        match m {
            7 if cue.left => {
                x -= 0.05 * reach;
                y -= 0.12 * reach;
            }
            9 if cue.left => {
                x -= 0.10 * reach;
                y -= 0.28 * reach;
            }
            8 if cue.right => {
                x += 0.05 * reach;
                y -= 0.12 * reach;
            }
            10 if cue.right => {
                x += 0.10 * reach;
                y -= 0.28 * reach;
            }
            0..=6 => {
                x += lean;
                y += 0.02 * reach;
            }
            _ => {}
        }
        let c = if rng.uniform() < 0.04 {
            0.25 + 0.2 * rng.uniform()
        } else {
            0.75 + 0.24 * rng.uniform()
        };
        *kp = Keypoint { x, y, c: c.clamp(0.0, 1.0) };
    }
    let mut logits = [1.6, 0.2, 0.1, 0.4, 0.3, 0.1, 0.2];
    logits[3] += 1.4 * reach;
    logits[0] -= 0.6 * reach;
    for l in logits.iter_mut() {
        *l += rng.normal() * 0.25;
    }
    FrameFeature { pose, emotion: emotion_from_logits(&logits), label: after as u8 }
}

/// Generate a record set. Sequence ids are `"{env}-{index}"`; interacting
/// sequences place their onset in the middle 25–60% of the sequence.
pub fn make_records(cfg: &SynthConfig, rng: &mut Rng) -> Vec<SequenceRecord> {
    let n_positive = (cfg.sequences as f64 * cfg.positive_fraction).round() as usize;
    let mut records = Vec::with_capacity(cfg.sequences);
    for s in 0..cfg.sequences {
        let positive = s < n_positive;
        let onset = if positive {
            let lo = (cfg.frames_per_sequence as f64 * 0.25) as usize;
            let hi = (cfg.frames_per_sequence as f64 * 0.60) as usize;
            Some(lo + rng.below((hi - lo).max(1)))
        } else {
            None
        };
        let sway_phase = rng.uniform() * std::f64::consts::TAU;
        let cue = Cue::draw(rng);
        let frames: Vec<FrameFeature> =
            (0..cfg.frames_per_sequence).map(|t| frame_at(t, onset, sway_phase, &cue, cfg, rng)).collect();
        let env_tag: u8 = cfg.env.into();
        records.push(SequenceRecord::new(format!("env{}-{:03}", env_tag, s), cfg.env, frames));
    }
    // Interleave classes so id order does not encode the label.
    let mut order: Vec<usize> = (0..records.len()).collect();
    rng.shuffle(&mut order);
    order.into_iter().map(|i| records[i].clone()).collect()
}

/// A small window set whose classes are linearly separable on one pose
/// coordinate, for detector overfitting checks. Labels are constant within
/// each window.
pub fn separable_windows(per_class: usize, window: usize, rng: &mut Rng) -> Vec<WindowSample> {
    let mut windows = Vec::with_capacity(2 * per_class);
    for cls in [0u8, 1u8] {
        for i in 0..per_class {
            let offset = if cls == 1 { 1.5 } else { -1.5 };
            let frames: Vec<FrameFeature> = (0..window)
                .map(|_| {
                    let mut pose = [Keypoint { x: 0.0, y: 0.0, c: 1.0 }; KEYPOINTS];
                    for kp in pose.iter_mut() {
                        kp.x = offset + rng.normal() * 0.3;
                        kp.y = rng.normal() * 0.3;
                    }
                    let mut emotion = [0.0; EMOTION_DIMS];
                    emotion[cls as usize] = 0.8;
                    emotion[6] = 0.2;
                    FrameFeature { pose, emotion, label: cls }
                })
                .collect();
            windows.push(WindowSample::new(format!("sep-{}-{}", cls, i), Env::Env1, 0, frames, 1));
        }
    }
    windows
}
