//! Sequence-level dataset splits. Every split keeps all frames of a
//! sequence in the same partition and stratifies on whether the sequence
//! contains any positive frame.

use super::{DataError, Env, SequenceRecord};
use crate::numerics::Rng;

/// Index-based train/validation partition of a record set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Stratified k-fold split over sequences. Each class's shuffled sequences
/// are dealt round-robin so every fold holds that class's count within one
/// of any other fold.
pub fn stratified_kfold(records: &[SequenceRecord], k: usize, seed: u64) -> Result<Vec<FoldSplit>, DataError> {
    if k < 2 {
        return Err(DataError::Invalid(format!("stratified_kfold: need k >= 2, got {}", k)));
    }
    if records.len() < k {
        return Err(DataError::Invalid(format!(
            "stratified_kfold: {} folds requested but only {} sequences available",
            k,
            records.len()
        )));
    }
    let mut positive: Vec<usize> = Vec::new();
    let mut negative: Vec<usize> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.has_positive() {
            positive.push(i);
        } else {
            negative.push(i);
        }
    }
    if positive.is_empty() || negative.is_empty() {
        return Err(DataError::Invalid(
            "stratified_kfold: both classes must be present at the sequence level".into(),
        ));
    }
    let mut rng = Rng::seed_from(seed);
    rng.shuffle(&mut positive);
    rng.shuffle(&mut negative);

    // One cursor carried across both classes keeps fold sizes balanced
    // while still dealing each class round-robin.
    let mut valid_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for class in [&positive, &negative] {
        for &idx in class {
            valid_sets[cursor % k].push(idx);
            cursor += 1;
        }
    }

    let mut folds = Vec::with_capacity(k);
    for valid in valid_sets.iter_mut() {
        valid.sort_unstable();
        let train: Vec<usize> = (0..records.len()).filter(|i| !valid.contains(i)).collect();
        folds.push(FoldSplit { train, valid: valid.clone() });
    }
    Ok(folds)
}

/// Two disjoint stratified halves of a single-person record set. Rejects
/// any record tagged with the held-out multi-person environment.
pub fn two_split_heldout(records: &[SequenceRecord], seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if let Some(r) = records.iter().find(|r| r.env == Env::Env3) {
        return Err(DataError::Invalid(format!(
            "two_split_heldout: record {} is tagged Env3; the held-out environment must not enter the split",
            r.id
        )));
    }
    let folds = stratified_kfold(records, 2, seed)?;
    Ok((folds[0].valid.clone(), folds[1].valid.clone()))
}
