//! Metrics and protocol logic: the consecutive-run window decision rule
//! and its threshold-free score, rank-based AUROC, macro-F1, balanced
//! accuracy, precision/recall sweeps, onset-aligned probability
//! trajectories, and the real-vs-synthetic discriminative score.

pub mod discriminative;
pub mod report;

pub use discriminative::{discriminative_score, DiscriminativeScore};
pub use report::{EvalReport, FoldMetrics, MetricSet, MetricSummary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("expected {expected} frame probabilities, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("{0}")]
    SingleClass(String),
    #[error("{0}")]
    Invalid(String),
}

/// Sequence-level decision rule: a window fires when at least `k_run`
/// consecutive frame probabilities reach the threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionRule {
    pub threshold: f64,
    pub k_run: usize,
    pub window: usize,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule { threshold: 0.5, k_run: 7, window: 15 }
    }
}

impl DecisionRule {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k_run == 0 || self.k_run > self.window {
            return Err(EvalError::Invalid(format!(
                "decision rule needs 1 <= k_run <= window, got k_run {} window {}",
                self.k_run, self.window
            )));
        }
        Ok(())
    }
}

/// 1 when some run of at least `k_run` consecutive probabilities is `>=`
/// the threshold.
pub fn sequence_decision(frame_probs: &[f64], rule: &DecisionRule) -> Result<u8, EvalError> {
    rule.validate()?;
    if frame_probs.len() != rule.window {
        return Err(EvalError::WrongLength { expected: rule.window, got: frame_probs.len() });
    }
    let mut run = 0usize;
    for &p in frame_probs {
        if p >= rule.threshold {
            run += 1;
            if run >= rule.k_run {
                return Ok(1);
            }
        } else {
            run = 0;
        }
    }
    Ok(0)
}

/// Threshold-free window score: the smallest threshold at which the window
/// would fire, i.e. the maximum over all `k_run`-length runs of the run's
/// minimum probability. Monotone in every frame probability and consistent
/// with [`sequence_decision`]: `score >= τ ⇔ decision(τ) = 1`.
pub fn sequence_score(frame_probs: &[f64], rule: &DecisionRule) -> Result<f64, EvalError> {
    rule.validate()?;
    if frame_probs.len() != rule.window {
        return Err(EvalError::WrongLength { expected: rule.window, got: frame_probs.len() });
    }
    let mut best = f64::NEG_INFINITY;
    for start in 0..=(frame_probs.len() - rule.k_run) {
        let run_min =
            frame_probs[start..start + rule.k_run].iter().cloned().fold(f64::INFINITY, f64::min);
        best = best.max(run_min);
    }
    Ok(best)
}

/// Rank-statistic AUROC with midrank tie handling: the probability that a
/// random positive outranks a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len(), "roc_auc: {} scores vs {} labels", scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass(format!(
            "roc_auc needs both classes, got {} positives and {} negatives",
            pos, neg
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("roc_auc: scores must not be NaN"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied entries all take the midrank.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Confusion {
    assert_eq!(pred.len(), truth.len(), "confusion: {} predictions vs {} labels", pred.len(), truth.len());
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    c
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the positive-class and negative-class F1 scores.
/// Zero-denominator F1 is defined as 0.
pub fn macro_f1(pred: &[u8], truth: &[u8]) -> f64 {
    let c = confusion(pred, truth);
    let f1_pos = f1_from_counts(c.tp, c.fp, c.fn_);
    let f1_neg = f1_from_counts(c.tn, c.fn_, c.fp);
    (f1_pos + f1_neg) / 2.0
}

/// Mean of the true-positive and true-negative rates.
pub fn balanced_accuracy(pred: &[u8], truth: &[u8]) -> f64 {
    let c = confusion(pred, truth);
    let tpr = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    let tnr = if c.tn + c.fp == 0 { 0.0 } else { c.tn as f64 / (c.tn + c.fp) as f64 };
    (tpr + tnr) / 2.0
}

#[derive(Clone, Copy, Debug)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Evenly spaced threshold grid in (0, 1): `n` points from 1/(n+1) to
/// n/(n+1). The default 99-point grid is 0.01..0.99.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

/// Precision and recall of the sequence decision rule over a threshold
/// grid. At thresholds with no predicted positives, precision is 1 by
/// convention; with no true positives, recall is 1 vacuously.
pub fn precision_recall_sweep(
    window_probs: &[Vec<f64>],
    labels: &[u8],
    grid: &[f64],
    rule: &DecisionRule,
) -> Result<Vec<PrPoint>, EvalError> {
    assert_eq!(
        window_probs.len(),
        labels.len(),
        "precision_recall_sweep: {} windows vs {} labels",
        window_probs.len(),
        labels.len()
    );
    // The window score is exactly the firing threshold, so one pass of
    // scores serves the whole grid.
    let scores: Vec<f64> =
        window_probs.iter().map(|p| sequence_score(p, rule)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(grid.len());
    for &tau in grid {
        if !(0.0..1.0).contains(&tau) || tau == 0.0 {
            return Err(EvalError::Invalid(format!("threshold grid values must be in (0, 1), got {}", tau)));
        }
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&score, &label) in scores.iter().zip(labels) {
            let fired = score >= tau;
            match (fired, label) {
                (true, 1) => tp += 1,
                (true, 0) => fp += 1,
                (false, 1) => fn_ += 1,
                _ => {}
            }
        }
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        out.push(PrPoint { threshold: tau, precision, recall });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct TrajectoryPoint {
    pub rel_frame: i64,
    pub median: f64,
    pub count: usize,
}

/// Median predicted probability as a function of time relative to the
/// intent onset, across sequences. Each input pairs a sequence's onset
/// index with its per-frame probabilities.
pub fn onset_aligned_trajectories(
    sequences: &[(usize, Vec<f64>)],
    rel_lo: i64,
    rel_hi: i64,
) -> Result<Vec<TrajectoryPoint>, EvalError> {
    if sequences.is_empty() {
        return Err(EvalError::Invalid("onset alignment needs at least one sequence with an onset".into()));
    }
    if rel_lo > rel_hi {
        return Err(EvalError::Invalid(format!("alignment window {}..{} is empty", rel_lo, rel_hi)));
    }
    let mut out = Vec::with_capacity((rel_hi - rel_lo + 1) as usize);
    for rel in rel_lo..=rel_hi {
        let mut values: Vec<f64> = Vec::new();
        for (onset, probs) in sequences {
            let idx = *onset as i64 + rel;
            if idx >= 0 && (idx as usize) < probs.len() {
                values.push(probs[idx as usize]);
            }
        }
        if values.is_empty() {
            continue;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("trajectory probabilities must not be NaN"));
        let mid = values.len() / 2;
        let median = if values.len() % 2 == 1 {
            values[mid]
        } else {
            (values[mid - 1] + values[mid]) / 2.0
        };
        out.push(TrajectoryPoint { rel_frame: rel, median, count: values.len() });
    }
    Ok(out)
}
