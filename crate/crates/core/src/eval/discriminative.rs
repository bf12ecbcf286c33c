//! Real-vs-synthetic discriminative score: a lightweight GRU classifier is
//! trained to separate the two sets on an 80/20 split; held-out accuracy
//! near chance means realistic synthesis. `D = |0.5 − accuracy|`.

use super::EvalError;
use crate::data::{WindowSample, FRAME_DIMS};
use crate::nn::{GruCell, Linear};
use crate::numerics::adam::Adam;
use crate::numerics::{Mode, Rng, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct DiscriminativeScore {
    pub accuracy: f64,
    pub score: f64,
}

const HIDDEN: usize = 32;
const EPOCHS: usize = 40;
const BATCH: usize = 32;

struct Classifier {
    tape: Tape,
    gru: GruCell,
    head: Linear,
}

impl Classifier {
    fn new(rng: &mut Rng) -> Self {
        let mut tape = Tape::new();
        let gru = GruCell::new(&mut tape, "disc.gru", FRAME_DIMS, HIDDEN, rng);
        let head = Linear::new(&mut tape, "disc.head", HIDDEN, 1, rng);
        Classifier { tape, gru, head }
    }

    /// Window-level probabilities for a batch, from the final hidden state.
    fn forward(&mut self, windows: &[&WindowSample]) -> Var {
        let b = windows.len();
        let steps = windows[0].len();
        let mut values = vec![0.0; steps * b * FRAME_DIMS];
        for (bi, w) in windows.iter().enumerate() {
            for (t, frame) in w.frames.iter().enumerate() {
                let row = t * b + bi;
                values[row * FRAME_DIMS..(row + 1) * FRAME_DIMS].copy_from_slice(&frame.flatten());
            }
        }
        let packed = self.tape.constant(values, vec![steps * b, FRAME_DIMS]);
        let mut h = self.gru.zero_state(&mut self.tape, b);
        for t in 0..steps {
            let xt = self.tape.slice_rows(packed, t * b, b);
            h = self.gru.step(&mut self.tape, xt, h);
        }
        let logits = self.head.forward(&mut self.tape, h);
        self.tape.sigmoid(logits)
    }
}

/// Split one class 80/20 after a shuffle, requiring at least one window on
/// each side.
fn split_class(windows: &[WindowSample], rng: &mut Rng) -> Result<(Vec<WindowSample>, Vec<WindowSample>), EvalError> {
    if windows.len() < 2 {
        return Err(EvalError::Invalid(format!(
            "discriminative score needs at least 2 windows per set for an 80/20 split, got {}",
            windows.len()
        )));
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    rng.shuffle(&mut order);
    let n_test = (windows.len() as f64 * 0.2).round().max(1.0) as usize;
    let n_test = n_test.min(windows.len() - 1);
    let test: Vec<WindowSample> = order[..n_test].iter().map(|&i| windows[i].clone()).collect();
    let train: Vec<WindowSample> = order[n_test..].iter().map(|&i| windows[i].clone()).collect();
    Ok((train, test))
}

/// Train the classifier (real = 1, synthetic = 0) and report held-out
/// accuracy and `D = |0.5 − accuracy|`.
pub fn discriminative_score(
    real: &[WindowSample],
    synthetic: &[WindowSample],
    rng: &mut Rng,
) -> Result<DiscriminativeScore, EvalError> {
    for (name, set) in [("real", real), ("synthetic", synthetic)] {
        if set.is_empty() {
            return Err(EvalError::Invalid(format!("discriminative score: the {} set is empty", name)));
        }
    }
    let window = real[0].len();
    for w in real.iter().chain(synthetic) {
        if w.len() != window {
            return Err(EvalError::Invalid(format!(
                "discriminative score: window lengths differ ({} vs {})",
                window,
                w.len()
            )));
        }
    }
    let (real_train, real_test) = split_class(real, rng)?;
    let (synth_train, synth_test) = split_class(synthetic, rng)?;

    let mut train: Vec<(WindowSample, f64)> = real_train
        .into_iter()
        .map(|w| (w, 1.0))
        .chain(synth_train.into_iter().map(|w| (w, 0.0)))
        .collect();
    let test: Vec<(WindowSample, f64)> = real_test
        .into_iter()
        .map(|w| (w, 1.0))
        .chain(synth_test.into_iter().map(|w| (w, 0.0)))
        .collect();

    let mut clf = Classifier::new(rng);
    let mut adam = Adam::new(&clf.tape, 1e-3, 0.0);
    clf.tape.set_mode(Mode::Train);
    for _ in 0..EPOCHS {
        rng.shuffle(&mut train);
        for chunk in train.chunks(BATCH) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|(w, _)| w).collect();
            let labels: Vec<f64> = chunk.iter().map(|(_, l)| *l).collect();
            let probs = clf.forward(&batch);
            let loss = crate::mintrvae::loss::label_loss(&mut clf.tape, probs, &labels);
            clf.tape.backward(loss);
            adam.step(&mut clf.tape);
            clf.tape.reset();
        }
    }

    clf.tape.set_mode(Mode::Infer);
    let batch: Vec<&WindowSample> = test.iter().map(|(w, _)| w).collect();
    let probs_var = clf.forward(&batch);
    let probs = clf.tape.values(probs_var).to_vec();
    clf.tape.reset();
    let correct = probs
        .iter()
        .zip(&test)
        .filter(|(&p, (_, label))| (p >= 0.5) == (*label >= 0.5))
        .count();
    let accuracy = correct as f64 / test.len() as f64;
    Ok(DiscriminativeScore { accuracy, score: (0.5 - accuracy).abs() })
}
