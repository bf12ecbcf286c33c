//! End-to-end fold orchestration: per-fold standardization, optional
//! generative rebalancing, detector training, and frame- plus
//! sequence-level evaluation. Shared by the CLI subcommands and the
//! acceptance suite.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{
    rebalance, stratified_kfold, two_split_heldout, window_sequences, DataError, SequenceRecord,
    Standardizer,
};
use crate::detectors::{train_detector, Detector, DetectorConfig, DetectorError, DetectorHistory};
use crate::eval::{
    balanced_accuracy, macro_f1, roc_auc, sequence_decision, sequence_score, DecisionRule, EvalError,
    EvalReport, FoldMetrics, MetricSet,
};
use crate::mintrvae::{train as train_vae, RvaeError, RvaeHyper, RvaeModel, RvaeSampler};
use crate::numerics::Rng;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Rvae(#[from] RvaeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
}

/// Everything a fold run needs beyond its data.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub stride: usize,
    pub min_positive: usize,
    pub rule: DecisionRule,
    pub detector: DetectorConfig,
    pub vae: RvaeHyper,
    /// Train a generative model on the fold and rebalance with it.
    pub augment: bool,
    pub target_positive_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stride: 5,
            min_positive: 7,
            rule: DecisionRule::default(),
            detector: DetectorConfig::default(),
            vae: RvaeHyper::default(),
            augment: false,
            target_positive_fraction: 0.5,
        }
    }
}

/// Raw evaluation arrays kept alongside the metrics so curve files can be
/// produced without re-running the models.
#[derive(Clone, Debug, Default)]
pub struct EvalArrays {
    pub frame_scores: Vec<f64>,
    pub frame_labels: Vec<u8>,
    pub seq_scores: Vec<f64>,
    pub seq_labels: Vec<u8>,
    /// Per-window frame probabilities, for precision/recall sweeps.
    pub window_probs: Vec<Vec<f64>>,
    /// (onset, per-frame probabilities) per onset-bearing record.
    pub onset_trajectories: Vec<(usize, Vec<f64>)>,
}

/// Frame- and sequence-level metrics of one detector on standardized
/// validation records.
pub fn evaluate_detector(
    detector: &mut Detector,
    valid_records: &[SequenceRecord],
    config: &PipelineConfig,
) -> Result<(MetricSet, MetricSet, EvalArrays), PipelineError> {
    let mut arrays = EvalArrays::default();

    for record in valid_records {
        if record.frames.len() < config.detector.window {
            continue;
        }
        let probs = detector.predict_sequence(record, config.stride)?;
        if let Some(onset) = record.onset_index {
            arrays.onset_trajectories.push((onset, probs.clone()));
        }
        arrays.frame_labels.extend(record.frames.iter().map(|f| f.label));
        arrays.frame_scores.extend(probs);
    }

    let windows = window_sequences(valid_records, config.detector.window, config.stride, config.min_positive);
    for window in &windows.windows {
        let probs = detector.predict_window(window);
        arrays.seq_scores.push(sequence_score(&probs, &config.rule)?);
        arrays.seq_labels.push(window.label);
        arrays.window_probs.push(probs);
    }

    let frame_pred: Vec<u8> =
        arrays.frame_scores.iter().map(|&p| (p >= config.rule.threshold) as u8).collect();
    let frame = MetricSet {
        auroc: roc_auc(&arrays.frame_scores, &arrays.frame_labels)?,
        macro_f1: macro_f1(&frame_pred, &arrays.frame_labels),
        balanced_accuracy: balanced_accuracy(&frame_pred, &arrays.frame_labels),
    };

    let seq_pred: Vec<u8> = arrays
        .window_probs
        .iter()
        .map(|p| sequence_decision(p, &config.rule))
        .collect::<Result<_, _>>()?;
    let sequence = MetricSet {
        auroc: roc_auc(&arrays.seq_scores, &arrays.seq_labels)?,
        macro_f1: macro_f1(&seq_pred, &arrays.seq_labels),
        balanced_accuracy: balanced_accuracy(&seq_pred, &arrays.seq_labels),
    };

    Ok((frame, sequence, arrays))
}

#[derive(Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub metrics: FoldMetrics,
    pub arrays: EvalArrays,
    pub detector_history: DetectorHistory,
    /// Number of synthetic windows appended by rebalancing.
    pub synthetic_added: usize,
}

/// Train on `train_records` and evaluate on `valid_records`, standardizing
/// both with statistics fitted on the training side only.
pub fn run_fold(
    fold: usize,
    train_records: &[SequenceRecord],
    valid_records: &[SequenceRecord],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FoldOutcome, PipelineError> {
    let standardizer = Standardizer::fit(train_records.iter().flat_map(|r| &r.frames))?;
    let train_std = standardizer.apply_records(train_records);
    let valid_std = standardizer.apply_records(valid_records);

    let windows = window_sequences(&train_std, config.detector.window, config.stride, config.min_positive);
    let mut train_windows = windows.windows;
    if train_windows.is_empty() {
        return Err(PipelineError::Fold { fold, message: "no training windows after windowing".into() });
    }

    let mut synthetic_added = 0usize;
    if config.augment {
        let mut vae_rng = Rng::seed_from(seed ^ 0x5641_4500);
        let mut vae = RvaeModel::new(config.vae.clone(), &mut vae_rng);
        vae.standardizer = Some(standardizer.clone());
        train_vae(&mut vae, &train_windows, &mut vae_rng)?;
        let sampler_rng = Rng::seed_from(seed ^ 0x53_414d50);
        let mut sampler = RvaeSampler::new(&mut vae, &train_windows, config.min_positive, sampler_rng);
        let before = train_windows.len();
        train_windows = rebalance(&train_windows, &mut sampler, config.target_positive_fraction)?;
        synthetic_added = train_windows.len() - before;
    }

    let valid_windows =
        window_sequences(&valid_std, config.detector.window, config.stride, config.min_positive).windows;
    let mut det_rng = Rng::seed_from(seed);
    let (mut detector, detector_history) =
        train_detector(config.detector.clone(), &train_windows, &valid_windows, &mut det_rng)
            .map_err(|e| match e {
                DetectorError::SingleClassValidation => PipelineError::Fold {
                    fold,
                    message: "validation fold contains a single frame-label class".into(),
                },
                other => PipelineError::Detector(other),
            })?;

    let (frame, sequence, arrays) =
        evaluate_detector(&mut detector, &valid_std, config).map_err(|e| match e {
            PipelineError::Eval(EvalError::SingleClass(m)) => PipelineError::Fold { fold, message: m },
            other => other,
        })?;

    Ok(FoldOutcome {
        fold,
        metrics: FoldMetrics { fold, frame, sequence },
        arrays,
        detector_history,
        synthetic_added,
    })
}

/// Stratified k-fold cross-validation. Folds run in parallel with seeds
/// derived as `seed + fold_index`.
pub fn crossval(
    records: &[SequenceRecord],
    k: usize,
    config: &PipelineConfig,
    seed: u64,
    label: &str,
) -> Result<(EvalReport, Vec<FoldOutcome>), PipelineError> {
    let folds = stratified_kfold(records, k, seed)?;
    let mut outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let train: Vec<SequenceRecord> = fold.train.iter().map(|&j| records[j].clone()).collect();
            let valid: Vec<SequenceRecord> = fold.valid.iter().map(|&j| records[j].clone()).collect();
            run_fold(i, &train, &valid, config, seed + i as u64)
        })
        .collect::<Result<_, _>>()?;
    outcomes.sort_by_key(|o| o.fold);
    let report = EvalReport::new(label, outcomes.iter().map(|o| o.metrics).collect());
    Ok((report, outcomes))
}

/// Two-split held-out protocol: the single-person records are split into
/// two stratified halves, one model trains on each half, and both evaluate
/// on the same held-out multi-person records.
pub fn heldout(
    records_single: &[SequenceRecord],
    records_heldout: &[SequenceRecord],
    config: &PipelineConfig,
    seed: u64,
    label: &str,
) -> Result<(EvalReport, Vec<FoldOutcome>), PipelineError> {
    let (half_a, half_b) = two_split_heldout(records_single, seed)?;
    let halves = [half_a, half_b];
    let mut outcomes: Vec<FoldOutcome> = halves
        .par_iter()
        .enumerate()
        .map(|(i, half)| {
            let train: Vec<SequenceRecord> = half.iter().map(|&j| records_single[j].clone()).collect();
            run_fold(i, &train, records_heldout, config, seed + i as u64)
        })
        .collect::<Result<_, _>>()?;
    outcomes.sort_by_key(|o| o.fold);
    let report = EvalReport::new(label, outcomes.iter().map(|o| o.metrics).collect());
    Ok((report, outcomes))
}
