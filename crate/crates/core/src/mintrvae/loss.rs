//! The four training-loss terms and the two schedules.
//!
//! Tape-based variants build differentiable graph nodes; the small plain
//! functions exist where a loss or schedule is meaningful outside a graph.

use crate::data::{KEYPOINTS, POSE_DIMS};
use crate::numerics::{Rng, Tape, Var};

/// Column indices of the x coordinates inside a flattened 51-wide pose row.
pub fn x_indices() -> Vec<usize> {
    (0..KEYPOINTS).map(|m| 3 * m).collect()
}

/// Column indices of the y coordinates.
pub fn y_indices() -> Vec<usize> {
    (0..KEYPOINTS).map(|m| 3 * m + 1).collect()
}

/// Column indices of the confidences.
pub fn conf_indices() -> Vec<usize> {
    (0..KEYPOINTS).map(|m| 3 * m + 2).collect()
}

/// Huber value of a residual vector: `||r||²/(2δ)` inside the threshold,
/// `||r|| − δ/2` outside.
pub fn huber(residual: &[f64], delta: f64) -> f64 {
    assert!(delta > 0.0, "huber: delta must be positive, got {}", delta);
    let norm_sq: f64 = residual.iter().map(|&r| r * r).sum();
    if norm_sq <= delta * delta {
        norm_sq / (2.0 * delta)
    } else {
        norm_sq.sqrt() - delta / 2.0
    }
}

/// Confidence-weighted pose loss over `m` predicted frames.
///
/// `pred` is `[m, 51]`; `target` is the matching flattened target rows.
/// Coordinates contribute `w_coord · mean_frames Σ_joints (c + ν) ·
/// huber(Δx, Δy)` where `c` is the target confidence of the joint;
/// confidences contribute `w_conf · MSE` over all confidence channels.
pub fn pose_loss(
    tape: &mut Tape,
    pred: Var,
    target: &[f64],
    confidence_floor: f64,
    huber_delta: f64,
    w_coord: f64,
    w_conf: f64,
) -> Var {
    let m = tape.shape(pred)[0];
    assert_eq!(
        tape.shape(pred),
        &[m, POSE_DIMS],
        "pose_loss: prediction must be [m, {}], got {:?}",
        POSE_DIMS,
        tape.shape(pred)
    );
    assert_eq!(target.len(), m * POSE_DIMS, "pose_loss: target length {} != {}", target.len(), m * POSE_DIMS);

    let xs = x_indices();
    let ys = y_indices();
    let cs = conf_indices();

    let target_var = tape.constant(target.to_vec(), vec![m, POSE_DIMS]);
    let residual = tape.sub(pred, target_var);
    let sq = tape.mul(residual, residual);
    let sq_x = tape.gather_cols(sq, &xs);
    let sq_y = tape.gather_cols(sq, &ys);
    let norm_sq = tape.add(sq_x, sq_y);
    let hub = tape.huber_normsq(norm_sq, huber_delta);

    // Per-joint weights (c + ν) come from the target and carry no gradient.
    let mut weights = vec![0.0; m * KEYPOINTS];
    for row in 0..m {
        for (j, &ci) in cs.iter().enumerate() {
            weights[row * KEYPOINTS + j] = target[row * POSE_DIMS + ci] + confidence_floor;
        }
    }
    let weight_var = tape.constant(weights, vec![m, KEYPOINTS]);
    let weighted = tape.mul(hub, weight_var);
    let coord_sum = tape.sum(weighted);
    let coord_term = tape.scale(coord_sum, w_coord / m as f64);

    let conf_pred = tape.gather_cols(pred, &cs);
    let conf_target = tape.gather_cols(target_var, &cs);
    let conf_diff = tape.sub(conf_pred, conf_target);
    let conf_sq = tape.mul(conf_diff, conf_diff);
    let conf_mse = tape.mean(conf_sq);
    let conf_term = tape.scale(conf_mse, w_conf);

    tape.add(coord_term, conf_term)
}

/// Mean KL divergence from the target emotion distribution to the predicted
/// one over `m` frames: `mean_frames Σ_c e_c · log(e_c / ê_c)`, with exact
/// zeros in the target contributing nothing.
pub fn emotion_loss(tape: &mut Tape, pred: Var, target: &[f64]) -> Var {
    let shape = tape.shape(pred).to_vec();
    assert_eq!(shape.len(), 2, "emotion_loss: prediction must be 2-d, got {:?}", shape);
    let (m, c) = (shape[0], shape[1]);
    assert_eq!(target.len(), m * c, "emotion_loss: target length {} != {}", target.len(), m * c);

    // Σ e·log e is a constant of the target; 0·log 0 is defined as 0.
    let entropy_term: f64 =
        target.iter().map(|&e| if e > 0.0 { e * e.ln() } else { 0.0 }).sum::<f64>() / m as f64;

    let target_var = tape.constant(target.to_vec(), vec![m, c]);
    let log_pred = tape.log(pred);
    let cross = tape.mul(target_var, log_pred);
    let cross_sum = tape.sum(cross);
    let neg_cross = tape.scale(cross_sum, -1.0 / m as f64);
    tape.add_scalar(neg_cross, entropy_term)
}

/// Mean binary cross-entropy over `m` frames. Predictions must already be
/// probabilities; targets are exact zeros and ones so the guarded log never
/// contributes through a zero coefficient.
pub fn label_loss(tape: &mut Tape, pred: Var, target: &[f64]) -> Var {
    let m = tape.values(pred).len();
    assert_eq!(target.len(), m, "label_loss: target length {} != {}", target.len(), m);
    let shape = tape.shape(pred).to_vec();

    let y = tape.constant(target.to_vec(), shape.clone());
    let one_minus_y = tape.constant(target.iter().map(|&t| 1.0 - t).collect(), shape.clone());
    let log_p = tape.log(pred);
    let pos = tape.mul(y, log_p);
    let neg_p = tape.scale(pred, -1.0);
    let one_minus_p = tape.add_scalar(neg_p, 1.0);
    let log_one_minus_p = tape.log(one_minus_p);
    let neg = tape.mul(one_minus_y, log_one_minus_p);
    let both = tape.add(pos, neg);
    let mean = tape.mean(both);
    tape.scale(mean, -1.0)
}

/// Free-bits KL to the standard normal prior: per latent dimension
/// `max(½(μ² + σ² − log σ² − 1), δ_FB)`, summed over dimensions and averaged
/// over the batch rows.
pub fn kl_free_bits(tape: &mut Tape, mu: Var, logvar: Var, free_bits: f64) -> Var {
    assert_eq!(
        tape.shape(mu),
        tape.shape(logvar),
        "kl_free_bits: mu {:?} and logvar {:?} must match",
        tape.shape(mu),
        tape.shape(logvar)
    );
    let rows = tape.shape(mu)[0];
    let mu_sq = tape.mul(mu, mu);
    let var = tape.exp(logvar);
    let sum = tape.add(mu_sq, var);
    let minus_logvar = tape.sub(sum, logvar);
    let shifted = tape.add_scalar(minus_logvar, -1.0);
    let kl = tape.scale(shifted, 0.5);
    let clamped = tape.max_scalar(kl, free_bits);
    let total = tape.sum(clamped);
    tape.scale(total, 1.0 / rows as f64)
}

/// Gaussian reparameterization `z = μ + exp(½ log σ²) ⊙ ε` with
/// `ε ~ N(0, I)`. Gradients reach `μ` and `log σ²` but not `ε`.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, rng: &mut Rng) -> Var {
    let shape = tape.shape(mu).to_vec();
    let n = tape.values(mu).len();
    let eps = tape.constant(rng.normal_vec(n, 1.0), shape);
    let half_logvar = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half_logvar);
    let noise = tape.mul(sigma, eps);
    tape.add(mu, noise)
}

/// Linear KL warm-up: `β_max · min(epoch / warmup, 1)`.
pub fn beta_schedule(epoch: usize, beta_max: f64, warmup_epochs: usize) -> f64 {
    if warmup_epochs == 0 {
        return beta_max;
    }
    beta_max * (epoch as f64 / warmup_epochs as f64).min(1.0)
}

/// Teacher-forcing probability annealed linearly from 1 at the first epoch
/// to 0 at the last.
pub fn teacher_forcing_tau(epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs < 2 {
        return if epoch == 0 { 1.0 } else { 0.0 };
    }
    (1.0 - epoch as f64 / (total_epochs - 1) as f64).clamp(0.0, 1.0)
}

/// Scheduled-sampling selector: ground truth with probability `tau`, the
/// model's previous prediction otherwise.
pub fn teacher_forcing_select(tape: &Tape, x_truth: Var, x_pred: Var, tau: f64, rng: &mut Rng) -> Var {
    assert_eq!(
        tape.shape(x_truth),
        tape.shape(x_pred),
        "teacher_forcing_select: shapes differ: truth {:?}, prediction {:?}",
        tape.shape(x_truth),
        tape.shape(x_pred)
    );
    if rng.uniform() < tau {
        x_truth
    } else {
        x_pred
    }
}
