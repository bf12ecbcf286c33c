//! Detector training: mean per-frame binary cross-entropy against the
//! ground-truth frame labels, with early stopping on validation frame
//! AUROC and best-epoch weight restoration.

use super::{Detector, DetectorConfig, DetectorError};
use crate::data::WindowSample;
use crate::eval::roc_auc;
use crate::mintrvae::loss::label_loss;
use crate::numerics::adam::Adam;
use crate::numerics::{Mode, Rng};

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub train_loss: f64,
    pub valid_auroc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DetectorHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Frame-level AUROC of the detector over a window set.
pub fn frame_auroc(detector: &mut Detector, windows: &[WindowSample]) -> Result<f64, DetectorError> {
    let prev = detector.tape().mode();
    detector.tape_mut().set_mode(Mode::Infer);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for w in windows {
        let probs = detector.predict_window(w);
        scores.extend(probs);
        labels.extend(w.frames.iter().map(|f| f.label));
    }
    detector.tape_mut().set_mode(prev);
    roc_auc(&scores, &labels).map_err(|_| DetectorError::SingleClassValidation)
}

/// Train a fresh detector. An empty validation set disables early stopping;
/// otherwise training stops once `patience` epochs pass without a new best
/// validation frame AUROC and the best-epoch weights are restored.
pub fn train_detector(
    config: DetectorConfig,
    train_windows: &[WindowSample],
    valid_windows: &[WindowSample],
    rng: &mut Rng,
) -> Result<(Detector, DetectorHistory), DetectorError> {
    if train_windows.is_empty() {
        return Err(DetectorError::EmptyTrainingSet);
    }
    for w in train_windows.iter().chain(valid_windows) {
        if w.len() != config.window {
            return Err(DetectorError::WrongWindowLength { expected: config.window, got: w.len() });
        }
    }
    let mut detector = Detector::new(config.clone(), rng);
    let mut adam = Adam::new(detector.tape(), config.lr, 0.0);

    let snapshot = |d: &Detector| -> Vec<Vec<f64>> {
        d.tape().registry().map(|(_, var, _)| d.tape().values(var).to_vec()).collect()
    };
    let restore = |d: &mut Detector, snap: &[Vec<f64>]| {
        let vars: Vec<_> = d.tape().registry().map(|(_, var, _)| var).collect();
        for (var, values) in vars.into_iter().zip(snap) {
            d.tape_mut().values_mut(var).copy_from_slice(values);
        }
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut best_auroc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<Vec<Vec<f64>>> = None;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    for epoch in 0..config.epochs {
        detector.tape_mut().set_mode(Mode::Train);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let (probs, labels) = detector.forward_batch(&batch);
            let loss = label_loss(detector.tape_mut(), probs, &labels);
            let loss_value = detector.tape().scalar(loss);
            if !loss_value.is_finite() {
                return Err(DetectorError::NonFiniteLoss { epoch });
            }
            detector.tape_mut().backward(loss);
            adam.step(detector.tape_mut());
            detector.tape_mut().reset();
            loss_sum += loss_value * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen as f64;

        let valid_auroc = if valid_windows.is_empty() {
            None
        } else {
            Some(frame_auroc(&mut detector, valid_windows)?)
        };
        history.push(EpochStats { train_loss, valid_auroc });

        if let Some(auroc) = valid_auroc {
            if auroc > best_auroc {
                best_auroc = auroc;
                best_epoch = epoch;
                best_params = Some(snapshot(&detector));
            } else if epoch - best_epoch >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    if let Some(snap) = &best_params {
        restore(&mut detector, snap);
    }
    detector.tape_mut().set_mode(Mode::Infer);
    Ok((detector, DetectorHistory { epochs: history, best_epoch, stopped_early }))
}
