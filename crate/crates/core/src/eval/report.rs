//! Aggregated evaluation reports and their file emitters.
//!
//! The report file is flat `key = value` text; the curve CSVs
//! (`roc_frame.csv`, `roc_seq.csv`, `pr_sweep.csv`, `onset_traj.csv`) carry
//! a header row and plain decimal columns for any plotting tool.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, PrPoint, TrajectoryPoint};

/// AUROC, macro-F1 and balanced accuracy at one granularity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricSet {
    pub auroc: f64,
    pub macro_f1: f64,
    pub balanced_accuracy: f64,
}

/// Frame-level and sequence-level metrics for one fold.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub frame: MetricSet,
    pub sequence: MetricSet,
}

/// Mean ± standard deviation of one metric across folds (sample std,
/// zero for a single fold).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MetricSummary { mean, std }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub folds: Vec<FoldMetrics>,
}

impl EvalReport {
    pub fn new(label: impl Into<String>, folds: Vec<FoldMetrics>) -> Self {
        EvalReport { label: label.into(), folds }
    }

    fn collect(&self, pick: impl Fn(&FoldMetrics) -> f64) -> Vec<f64> {
        self.folds.iter().map(pick).collect()
    }

    pub fn frame_auroc(&self) -> MetricSummary {
        summarize(&self.collect(|f| f.frame.auroc))
    }

    pub fn frame_macro_f1(&self) -> MetricSummary {
        summarize(&self.collect(|f| f.frame.macro_f1))
    }

    pub fn frame_balanced_accuracy(&self) -> MetricSummary {
        summarize(&self.collect(|f| f.frame.balanced_accuracy))
    }

    pub fn sequence_auroc(&self) -> MetricSummary {
        summarize(&self.collect(|f| f.sequence.auroc))
    }

    pub fn sequence_macro_f1(&self) -> MetricSummary {
        summarize(&self.collect(|f| f.sequence.macro_f1))
    }

    pub fn sequence_balanced_accuracy(&self) -> MetricSummary {
        summarize(&self.collect(|f| f.sequence.balanced_accuracy))
    }

    /// Flat key-value rendering: per-fold rows then mean/std aggregates.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("label = {}\n", self.label));
        out.push_str(&format!("folds = {}\n", self.folds.len()));
        for f in &self.folds {
            for (level, m) in [("frame", &f.frame), ("seq", &f.sequence)] {
                out.push_str(&format!(
                    "fold{}.{}.auroc = {:.6}\nfold{}.{}.macro_f1 = {:.6}\nfold{}.{}.balanced_accuracy = {:.6}\n",
                    f.fold, level, m.auroc, f.fold, level, m.macro_f1, f.fold, level, m.balanced_accuracy
                ));
            }
        }
        let rows = [
            ("frame.auroc", self.frame_auroc()),
            ("frame.macro_f1", self.frame_macro_f1()),
            ("frame.balanced_accuracy", self.frame_balanced_accuracy()),
            ("seq.auroc", self.sequence_auroc()),
            ("seq.macro_f1", self.sequence_macro_f1()),
            ("seq.balanced_accuracy", self.sequence_balanced_accuracy()),
        ];
        for (name, s) in rows {
            out.push_str(&format!("{}.mean = {:.6}\n{}.std = {:.6}\n", name, s.mean, name, s.std));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path.as_ref(), self.render())
            .map_err(|e| EvalError::Invalid(format!("write report {}: {}", path.as_ref().display(), e)))
    }
}

/// ROC curve points from scores: one `(fpr, tpr, threshold)` row per
/// distinct score, sweeping from the highest threshold down.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("roc_points: NaN score"));
    let pos = labels.iter().filter(|&&l| l == 1).count().max(1) as f64;
    let neg = (labels.len() - labels.iter().filter(|&&l| l == 1).count()).max(1) as f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((fp as f64 / neg, tp as f64 / pos, threshold));
    }
    out
}

pub fn write_roc_csv(path: impl AsRef<Path>, points: &[(f64, f64, f64)]) -> Result<(), EvalError> {
    let mut text = String::from("fpr,tpr,threshold\n");
    for (fpr, tpr, thr) in points {
        text.push_str(&format!("{},{},{}\n", fpr, tpr, thr));
    }
    std::fs::write(path.as_ref(), text)
        .map_err(|e| EvalError::Invalid(format!("write {}: {}", path.as_ref().display(), e)))
}

pub fn write_pr_csv(path: impl AsRef<Path>, points: &[PrPoint]) -> Result<(), EvalError> {
    let mut text = String::from("threshold,precision,recall\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    std::fs::write(path.as_ref(), text)
        .map_err(|e| EvalError::Invalid(format!("write {}: {}", path.as_ref().display(), e)))
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, points: &[TrajectoryPoint]) -> Result<(), EvalError> {
    let mut text = String::from("rel_frame,median_probability,count\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.rel_frame, p.median, p.count));
    }
    std::fs::write(path.as_ref(), text)
        .map_err(|e| EvalError::Invalid(format!("write {}: {}", path.as_ref().display(), e)))
}

pub fn write_loss_history_csv(
    path: impl AsRef<Path>,
    history: &[crate::mintrvae::LossBreakdown],
) -> Result<(), EvalError> {
    let file = std::fs::File::create(path.as_ref())
        .map_err(|e| EvalError::Invalid(format!("write {}: {}", path.as_ref().display(), e)))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "epoch,pose,emotion,label,kl,total,beta,tau")?;
        for (i, h) in history.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                i, h.pose, h.emotion, h.label, h.kl, h.total, h.beta_used, h.tau_used
            )?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| EvalError::Invalid(format!("write {}: {}", path.as_ref().display(), e)))
}
