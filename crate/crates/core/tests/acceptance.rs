//! Acceptance gate: one test per criterion, each printing a PASS line with
//! the measured numbers (visible under `--nocapture`).
//!
//! Criterion 9 (full-dataset reproduction) only runs when the released
//! dataset is available; point `MINT_DATASET` at the single-person dataset
//! file and `MINT_DATASET_HELDOUT` at the multi-person file to enable it.

use mint_rvae::data::synthetic::{make_records, separable_windows, SynthConfig};
use mint_rvae::data::{
    window_sequences, Env, FrameFeature, Keypoint, SequenceRecord, Standardizer, WindowSample,
    EMOTION_DIMS, FRAME_DIMS, KEYPOINTS, POSE_DIMS,
};
use mint_rvae::detectors::{train_detector, Backbone, DetectorConfig, InputMode};
use mint_rvae::detectors::train::frame_auroc;
use mint_rvae::eval::{
    balanced_accuracy, discriminative_score, macro_f1, roc_auc, sequence_decision, DecisionRule,
};
use mint_rvae::mintrvae::loss::{
    beta_schedule, emotion_loss, huber, kl_free_bits, label_loss, pose_loss,
};
use mint_rvae::mintrvae::{train as vae_train, RvaeHyper, RvaeModel};
use mint_rvae::numerics::gradcheck::{grad_check, grad_check_in};
use mint_rvae::numerics::{Rng, Tape};
use mint_rvae::pipeline::{run_fold, PipelineConfig};

const FD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn standardized_windows(seed: u64, sequences: usize, frames: usize, positive_fraction: f64) -> Vec<WindowSample> {
    let mut rng = Rng::seed_from(seed);
    let cfg = SynthConfig { sequences, frames_per_sequence: frames, positive_fraction, ..Default::default() };
    let records = make_records(&cfg, &mut rng);
    let standardizer = Standardizer::fit(records.iter().flat_map(|r| &r.frames)).unwrap();
    let standardized = standardizer.apply_records(&records);
    window_sequences(&standardized, 15, 5, 7).windows
}

// ── criterion 1: gradient correctness ───────────────────────────────

fn check_loss_constituent(name: &str, mut build: impl FnMut(&mut Tape, &mut Rng)) {
    let mut worst: f64 = 0.0;
    for point in 0..10 {
        let mut tape = Tape::new();
        let mut init_rng = Rng::seed_from(1000 + point);
        build(&mut tape, &mut init_rng);
        let err = grad_check(
            &mut tape,
            |t| {
                let params = t.params();
                build_loss_for(name, t, &params)
            },
            FD_STEP,
        );
        worst = worst.max(err);
    }
    assert!(worst < GRAD_TOL, "{}: max fd error {} >= {}", name, worst, GRAD_TOL);
    println!("criterion 1 [{}]: max fd error {:.3e}", name, worst);
}

/// Rebuild the named loss from the tape's registered parameters. Target
/// data is derived deterministically from the parameter count so each
/// random point sees fresh but reproducible targets.
fn build_loss_for(name: &str, t: &mut Tape, params: &[mint_rvae::numerics::Var]) -> mint_rvae::numerics::Var {
    let mut data_rng = Rng::seed_from(9000);
    match name {
        "huber_pose" => {
            let pred = params[0];
            let m = t.shape(pred)[0];
            let target: Vec<f64> = (0..m * POSE_DIMS).map(|_| data_rng.normal() * 0.8).collect();
            pose_loss(t, pred, &target, 0.1, 1.0, 1.0, 0.0)
        }
        "confidence_mse" => {
            let pred = params[0];
            let m = t.shape(pred)[0];
            let target: Vec<f64> = (0..m * POSE_DIMS).map(|_| data_rng.uniform()).collect();
            pose_loss(t, pred, &target, 0.1, 1.0, 0.0, 1.0)
        }
        "emotion_kl" => {
            let logits = params[0];
            let m = t.shape(logits)[0];
            let pred = t.softmax(logits);
            let target: Vec<f64> = (0..m)
                .flat_map(|_| {
                    let raw: Vec<f64> = (0..EMOTION_DIMS).map(|_| data_rng.uniform() + 0.05).collect();
                    let sum: f64 = raw.iter().sum();
                    raw.into_iter().map(move |v| v / sum)
                })
                .collect();
            emotion_loss(t, pred, &target)
        }
        "label_bce" => {
            let logits = params[0];
            let m = t.shape(logits)[0];
            let pred = t.sigmoid(logits);
            let target: Vec<f64> = (0..m).map(|_| data_rng.bernoulli(0.5) as u8 as f64).collect();
            label_loss(t, pred, &target)
        }
        "free_bits_kl" => {
            let mu = params[0];
            let logvar = params[1];
            kl_free_bits(t, mu, logvar, 0.1)
        }
        other => unreachable!("unknown constituent {}", other),
    }
}

#[test]
fn criterion_1_gradient_correctness() {
    check_loss_constituent("huber_pose", |t, rng| {
        t.param("pred", rng.normal_vec(2 * POSE_DIMS, 1.0), vec![2, POSE_DIMS]);
    });
    check_loss_constituent("confidence_mse", |t, rng| {
        t.param("pred", rng.normal_vec(2 * POSE_DIMS, 1.0), vec![2, POSE_DIMS]);
    });
    check_loss_constituent("emotion_kl", |t, rng| {
        t.param("logits", rng.normal_vec(3 * EMOTION_DIMS, 1.0), vec![3, EMOTION_DIMS]);
    });
    check_loss_constituent("label_bce", |t, rng| {
        t.param("logits", rng.normal_vec(6, 1.5), vec![6, 1]);
    });
    check_loss_constituent("free_bits_kl", |t, rng| {
        t.param("mu", rng.normal_vec(8, 1.0), vec![2, 4]);
        t.param("logvar", rng.normal_vec(8, 1.0), vec![2, 4]);
    });

    // Detector BCE through each backbone at one random point each, then a
    // small full detector across 10 points.
    let mut worst: f64 = 0.0;
    for point in 0..10u64 {
        let backbone = match point % 3 {
            0 => Backbone::Gru,
            1 => Backbone::Lstm,
            _ => Backbone::Transformer,
        };
        let mut rng = Rng::seed_from(2000 + point);
        let config = DetectorConfig {
            backbone,
            input_mode: InputMode::Multimodal,
            hidden: 4,
            heads: 2,
            window: 4,
            ..Default::default()
        };
        let mut det = mint_rvae::detectors::Detector::new(config, &mut rng);
        let windows = separable_windows(1, 4, &mut rng);
        let err = grad_check_in(
            &mut det,
            |d| d.tape_mut(),
            |d| {
                let batch: Vec<&WindowSample> = windows.iter().collect();
                let (probs, labels) = d.forward_batch(&batch);
                label_loss(d.tape_mut(), probs, &labels)
            },
            FD_STEP,
        );
        worst = worst.max(err);
    }
    assert!(worst < GRAD_TOL, "detector_bce: max fd error {}", worst);
    println!("criterion 1 [detector_bce]: max fd error {:.3e}", worst);

    // Composed total loss on a 3-frame window through the full generative
    // model at 10 random parameter points.
    let tiny = RvaeHyper {
        latent_dim: 3,
        mlp_dims: [8, 6, 4],
        rnn_hidden: 5,
        decoder_proj: 4,
        window: 3,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for point in 0..10u64 {
        let mut rng = Rng::seed_from(3000 + point);
        let mut model = RvaeModel::new(tiny.clone(), &mut rng);
        let mut w_rng = Rng::seed_from(4000 + point);
        let cfg = SynthConfig { sequences: 1, frames_per_sequence: 3, positive_fraction: 1.0, ..Default::default() };
        let records = make_records(&cfg, &mut w_rng);
        let window = WindowSample::new("w".into(), Env::Env1, 0, records[0].frames.clone(), 1);
        let err = grad_check_in(
            &mut model,
            |m| m.tape_mut(),
            |m| {
                let mut step_rng = Rng::seed_from(5000 + point);
                let (total, _) = m.batch_loss_for_check(&window, 0.4, 0.5, &mut step_rng);
                total
            },
            FD_STEP,
        );
        worst = worst.max(err);
    }
    assert!(worst < GRAD_TOL, "composed_total: max fd error {}", worst);
    println!("criterion 1 [composed_total]: max fd error {:.3e}", worst);
    println!("criterion 1: PASS (gradient correctness, all seven checks < {})", GRAD_TOL);
}

// ── criterion 2: formula unit suite ─────────────────────────────────

#[test]
fn criterion_2_formula_unit_suite() {
    let exact = |a: f64, b: f64| (a - b).abs() <= 1e-9;

    assert!(exact(huber(&[0.0], 1.0), 0.0));
    assert!(exact(huber(&[0.5], 1.0), 0.125));
    assert!(exact(huber(&[2.0], 1.0), 1.5));

    let mut tape = Tape::new();
    let mu = tape.constant(vec![0.0; 32], vec![1, 32]);
    let lv = tape.constant(vec![0.0; 32], vec![1, 32]);
    let kl = kl_free_bits(&mut tape, mu, lv, 0.1);
    assert!(exact(tape.scalar(kl), 3.2));
    let mut mu_vals = vec![0.0; 32];
    mu_vals[0] = 1.0;
    let mu = tape.constant(mu_vals, vec![1, 32]);
    let lv = tape.constant(vec![0.0; 32], vec![1, 32]);
    let kl = kl_free_bits(&mut tape, mu, lv, 0.1);
    assert!(exact(tape.scalar(kl), 3.6));

    assert!(exact(beta_schedule(0, 0.8, 5000), 0.0));
    assert!(exact(beta_schedule(2500, 0.8, 5000), 0.4));
    assert!(exact(beta_schedule(10000, 0.8, 5000), 0.8));

    let target = vec![0.2, 0.1, 0.3, 0.05, 0.15, 0.1, 0.1];
    let pred = tape.constant(target.clone(), vec![1, 7]);
    let kl = emotion_loss(&mut tape, pred, &target);
    assert!(exact(tape.scalar(kl), 0.0));
    let uniform = tape.constant(vec![1.0 / 7.0; 7], vec![1, 7]);
    let mut one_hot = vec![0.0; 7];
    one_hot[4] = 1.0;
    let kl = emotion_loss(&mut tape, uniform, &one_hot);
    assert!(exact(tape.scalar(kl), (7.0f64).ln()));

    let half = tape.constant(vec![0.5], vec![1, 1]);
    let bce_pos = label_loss(&mut tape, half, &[1.0]);
    assert!(exact(tape.scalar(bce_pos), (2.0f64).ln()));
    let half = tape.constant(vec![0.5], vec![1, 1]);
    let bce_neg = label_loss(&mut tape, half, &[0.0]);
    assert!(exact(tape.scalar(bce_neg), (2.0f64).ln()));
    let one = tape.constant(vec![1.0], vec![1, 1]);
    let bce_exact = label_loss(&mut tape, one, &[1.0]);
    assert!(exact(tape.scalar(bce_exact), 0.0));

    println!("criterion 2: PASS (formula unit suite exact to 1e-9)");
}

// ── criterion 3: metric oracle equivalence ──────────────────────────

#[test]
fn criterion_3_metric_oracles() {
    let mut rng = Rng::seed_from(42);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 2 + rng.below(199);
        // Coarse quantization forces heavy ties.
        let levels = 1 + rng.below(12);
        let scores: Vec<f64> =
            (0..n).map(|_| (rng.uniform() * levels as f64).round() / levels as f64).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
        labels[0] = 1;
        labels[n - 1] = 0;

        let fast = roc_auc(&scores, &labels).unwrap();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            if labels[i] != 1 {
                continue;
            }
            for j in 0..n {
                if labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        worst = worst.max((fast - wins / pairs).abs());
    }
    assert!(worst < 1e-12, "roc_auc max deviation {}", worst);

    for _ in 0..500 {
        let n = 3 + rng.below(60);
        let truth: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
        let (mut tp, mut tn, mut fp, mut fn_) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (&p, &t) in pred.iter().zip(&truth) {
            match (p, t) {
                (1, 1) => tp += 1.0,
                (0, 0) => tn += 1.0,
                (1, 0) => fp += 1.0,
                _ => fn_ += 1.0,
            }
        }
        let f1_pos = if 2.0 * tp + fp + fn_ == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        let f1_neg = if 2.0 * tn + fn_ + fp == 0.0 { 0.0 } else { 2.0 * tn / (2.0 * tn + fn_ + fp) };
        assert_eq!(macro_f1(&pred, &truth), (f1_pos + f1_neg) / 2.0);
        let tpr = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
        let tnr = if tn + fp == 0.0 { 0.0 } else { tn / (tn + fp) };
        assert_eq!(balanced_accuracy(&pred, &truth), (tpr + tnr) / 2.0);
    }

    println!("criterion 3: PASS (roc_auc within 1e-12 of pairwise oracle; macro-F1/balanced accuracy exact)");
}

// ── criterion 4: decision-rule suite ────────────────────────────────

#[test]
fn criterion_4_decision_rules_exhaustive() {
    let rule = DecisionRule { threshold: 0.5, k_run: 7, window: 15 };
    for mask in 0u32..(1 << 15) {
        let bits: Vec<u8> = (0..15).map(|i| ((mask >> i) & 1) as u8).collect();
        let probs: Vec<f64> = bits.iter().map(|&b| b as f64).collect();

        // Prediction oracle: any run of >= 7 consecutive ones.
        let mut longest = 0usize;
        let mut run = 0usize;
        for &b in &bits {
            if b == 1 {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        let expected_decision = (longest >= 7) as u8;
        assert_eq!(
            sequence_decision(&probs, &rule).unwrap(),
            expected_decision,
            "mask {:015b}",
            mask
        );

        // Ground-truth oracle: at least 7 positive frames, any positions.
        let frames: Vec<FrameFeature> = bits
            .iter()
            .map(|&b| {
                let mut emotion = [0.0; EMOTION_DIMS];
                emotion[0] = 1.0;
                FrameFeature { pose: [Keypoint { x: 0.0, y: 0.0, c: 1.0 }; KEYPOINTS], emotion, label: b }
            })
            .collect();
        let expected_label = (bits.iter().filter(|&&b| b == 1).count() >= 7) as u8;
        assert_eq!(mint_rvae::data::window_label(&frames, 7), expected_label, "mask {:015b}", mask);
    }
    println!("criterion 4: PASS (all 2^15 label windows match the run-length and count oracles exactly)");
}

// ── criterion 5: VAE memorization ───────────────────────────────────

#[test]
fn criterion_5_vae_memorization() {
    let windows = standardized_windows(510, 4, 30, 1.0);
    let window = windows
        .iter()
        .find(|w| w.label == 1)
        .expect("benchmark must contain a positive window")
        .clone();
    let copies: Vec<WindowSample> = vec![window.clone(); 10];

    let hyper = RvaeHyper::default().scaled(200.0 / 700.0);
    assert_eq!(hyper.epochs, 200);
    let mut rng = Rng::seed_from(511);
    let mut model = RvaeModel::new(hyper, &mut rng);
    vae_train(&mut model, &copies, &mut rng).unwrap();

    let preds = model.predict_next_frames(&window).unwrap();
    let targets = window.target_view();
    let mut pose_se = 0.0;
    let mut emo_kl = 0.0;
    for (pred, target) in preds.iter().zip(targets) {
        let flat = target.flatten();
        for d in 0..POSE_DIMS {
            let diff = pred[d] - flat[d];
            pose_se += diff * diff;
        }
        for c in 0..EMOTION_DIMS {
            let e = flat[POSE_DIMS + c];
            if e > 0.0 {
                emo_kl += e * (e / pred[POSE_DIMS + c].max(1e-12)).ln();
            }
        }
    }
    let pose_mse = pose_se / (targets.len() * POSE_DIMS) as f64;
    let emotion_kl = emo_kl / targets.len() as f64;
    println!(
        "criterion 5: teacher-forced pose MSE {:.5}, emotion KL {:.5} after 200 epochs",
        pose_mse, emotion_kl
    );
    assert!(pose_mse < 0.05, "pose reconstruction MSE {} >= 0.05", pose_mse);
    assert!(emotion_kl < 0.05, "emotion KL {} >= 0.05", emotion_kl);
    println!("criterion 5: PASS (VAE memorizes a single window at desk scale)");
}

// ── criterion 6: generation validity and realism floor ──────────────

#[test]
fn criterion_6_generation_validity_and_realism_floor() {
    // Validity: 1000 windows from a briefly trained model.
    let train_windows = standardized_windows(610, 20, 45, 0.6);
    let hyper = RvaeHyper::default().scaled(0.1);
    let mut rng = Rng::seed_from(611);
    let mut model = RvaeModel::new(hyper, &mut rng);
    vae_train(&mut model, &train_windows, &mut rng).unwrap();
    let seeds: Vec<FrameFeature> = train_windows
        .iter()
        .flat_map(|w| w.frames.iter())
        .filter(|f| f.label == 1)
        .cloned()
        .collect();
    let generated = mint_rvae::mintrvae::generate::generate(&mut model, 1000, 15, &mut rng, &seeds).unwrap();
    assert_eq!(generated.len(), 1000);
    let mut valid = 0usize;
    for g in &generated {
        if g.record.frames.len() == 15 && g.record.frames.iter().all(|f| f.validate().is_ok()) {
            valid += 1;
        }
    }
    assert_eq!(valid, 1000, "only {}/1000 generated windows satisfy the frame invariants", valid);

    // Calibration: two disjoint halves of real data are indistinguishable.
    // A seeded shuffle makes the halves exchangeable before splitting.
    let mut all = standardized_windows(612, 60, 45, 0.6);
    let mut split_rng = Rng::seed_from(6120);
    split_rng.shuffle(&mut all);
    let half_b = all.split_off(all.len() / 2);
    let half_a = all;
    let mut rng = Rng::seed_from(613);
    let calibration = discriminative_score(&half_a, &half_b, &mut rng).unwrap();
    println!(
        "criterion 6: calibration D {:.3} (accuracy {:.3}) on {}+{} windows",
        calibration.score,
        calibration.accuracy,
        half_a.len(),
        half_b.len()
    );
    assert!(calibration.score < 0.15, "calibration D {} >= 0.15", calibration.score);

    // Forgery: constant-zero windows must be trivially separable.
    let zero_frame = FrameFeature::from_flat(&[0.0; FRAME_DIMS]);
    let forgery: Vec<WindowSample> = (0..half_b.len())
        .map(|i| WindowSample {
            record_id: format!("zero-{}", i),
            env: Env::Env1,
            start: 0,
            frames: vec![zero_frame.clone(); 15],
            label: 0,
        })
        .collect();
    let mut rng = Rng::seed_from(614);
    let forged = discriminative_score(&half_a, &forgery, &mut rng).unwrap();
    println!("criterion 6: forgery D {:.3} (accuracy {:.3})", forged.score, forged.accuracy);
    assert!(forged.score > 0.35, "forgery D {} <= 0.35", forged.score);
    println!("criterion 6: PASS (validity 1000/1000; calibration D < 0.15; forgery D > 0.35)");
}

// ── criterion 7: detector overfit ───────────────────────────────────

#[test]
fn criterion_7_detector_overfit() {
    for backbone in [Backbone::Gru, Backbone::Lstm, Backbone::Transformer] {
        let mut rng = Rng::seed_from(710);
        let windows = separable_windows(10, 15, &mut rng);
        let config = DetectorConfig {
            backbone,
            input_mode: InputMode::Multimodal,
            hidden: 16,
            heads: 4,
            window: 15,
            epochs: 200,
            batch_size: 10,
            patience: 200,
            ..Default::default()
        };
        let (mut det, history) = train_detector(config, &windows, &windows, &mut rng).unwrap();
        let auroc = frame_auroc(&mut det, &windows).unwrap();
        println!(
            "criterion 7 [{:?}]: training frame AUROC {:.4} after {} epochs",
            backbone,
            auroc,
            history.epochs.len()
        );
        assert!(auroc >= 0.99, "{:?} training frame AUROC {} < 0.99", backbone, auroc);
    }
    println!("criterion 7: PASS (all three backbones reach 0.99 training frame AUROC)");
}

// ── criterion 8: rebalancing effect ─────────────────────────────────

#[test]
fn criterion_8_rebalancing_effect() {
    // One imbalanced benchmark (about 30% positive windows), three seeds,
    // transformer multimodal with and without generative rebalancing.
    let mut data_rng = Rng::seed_from(810);
    let cfg = SynthConfig {
        sequences: 26,
        frames_per_sequence: 45,
        positive_fraction: 0.35,
        noise: 0.05,
        ..Default::default()
    };
    let records = make_records(&cfg, &mut data_rng);
    let positives: usize = {
        let windows = window_sequences(&records, 15, 5, 7).windows;
        let p = windows.iter().filter(|w| w.label == 1).count();
        println!(
            "criterion 8: benchmark has {} windows, {:.1}% positive",
            windows.len(),
            100.0 * p as f64 / windows.len() as f64
        );
        p
    };
    assert!(positives > 0);

    let detector = DetectorConfig {
        backbone: Backbone::Transformer,
        input_mode: InputMode::Multimodal,
        hidden: 64,
        heads: 4,
        window: 15,
        epochs: 60,
        patience: 20,
        batch_size: 32,
        ..Default::default()
    };
    let vae = RvaeHyper { epochs: 120, warmup_epochs: 860, ..Default::default() };

    let split_seed = 811u64;
    let folds = mint_rvae::data::stratified_kfold(&records, 4, split_seed).unwrap();
    let train: Vec<SequenceRecord> = folds[0].train.iter().map(|&i| records[i].clone()).collect();
    let valid: Vec<SequenceRecord> = folds[0].valid.iter().map(|&i| records[i].clone()).collect();

    let mut aug_mean = 0.0;
    let mut plain_mean = 0.0;
    for seed in [8101u64, 8102, 8103] {
        for augment in [false, true] {
            let pc = PipelineConfig {
                stride: 5,
                min_positive: 7,
                rule: DecisionRule::default(),
                detector: detector.clone(),
                vae: vae.clone(),
                augment,
                target_positive_fraction: 0.5,
            };
            let outcome = run_fold(0, &train, &valid, &pc, seed).unwrap();
            let auroc = outcome.metrics.frame.auroc;
            println!(
                "criterion 8 [seed {} {}]: validation frame AUROC {:.4} ({} synthetic windows)",
                seed,
                if augment { "with rebalancing" } else { "no augmentation" },
                auroc,
                outcome.synthetic_added
            );
            if augment {
                aug_mean += auroc / 3.0;
            } else {
                plain_mean += auroc / 3.0;
            }
        }
    }
    println!(
        "criterion 8: mean validation frame AUROC {:.4} (rebalanced) vs {:.4} (plain)",
        aug_mean, plain_mean
    );
    assert!(
        aug_mean >= plain_mean,
        "rebalanced mean {} < plain mean {}",
        aug_mean,
        plain_mean
    );
    println!("criterion 8: PASS (generative rebalancing does not hurt, averaged over 3 seeds)");
}

// ── criterion 9: full reproduction (dataset-gated) ──────────────────

#[test]
fn criterion_9_full_reproduction_when_dataset_available() {
    let Ok(dataset) = std::env::var("MINT_DATASET") else {
        println!(
            "criterion 9: SKIPPED (released dataset not available; set MINT_DATASET and \
             MINT_DATASET_HELDOUT to run; criteria 1-8 carry acceptance)"
        );
        return;
    };
    let records = mint_rvae::data::load_dataset(&dataset).expect("load released dataset");

    // Dataset shape check on the single-person file.
    let env1: Vec<&SequenceRecord> = records.iter().filter(|r| r.env == Env::Env1).collect();
    let frames: usize = env1.iter().map(|r| r.frames.len()).sum();
    let positives: usize = env1.iter().flat_map(|r| &r.frames).filter(|f| f.label == 1).count();
    let frac = positives as f64 / frames as f64;
    println!("criterion 9: env1 {} sequences, {} frames, {:.1}% positive", env1.len(), frames, 100.0 * frac);
    assert_eq!(env1.len(), 54);
    assert_eq!(frames, 7620);
    assert!((frac - 0.302).abs() <= 0.001);

    let detector = DetectorConfig::comparable(Backbone::Transformer, InputMode::Multimodal);
    let run = |augment: bool, input_mode: InputMode, hidden: usize| {
        let pc = PipelineConfig {
            stride: 5,
            min_positive: 7,
            rule: DecisionRule::default(),
            detector: DetectorConfig { input_mode, hidden, ..detector.clone() },
            vae: RvaeHyper::default(),
            augment,
            target_positive_fraction: 0.5,
        };
        mint_rvae::pipeline::crossval(&records, 5, &pc, 9000, "criterion9").unwrap().0
    };

    let aug = run(true, InputMode::Multimodal, 256);
    let plain = run(false, InputMode::Multimodal, 256);
    let pose = run(false, InputMode::PoseOnly, 256);
    let emotion = run(false, InputMode::EmotionOnly, 16);

    let frame = aug.frame_auroc().mean;
    let seq = aug.sequence_auroc().mean;
    println!("criterion 9: transformer multimodal+VAE frame AUROC {:.3}, seq AUROC {:.3}", frame, seq);
    assert!((frame - 0.95).abs() <= 0.05);
    assert!((seq - 0.951).abs() <= 0.05);
    assert!(frame >= plain.frame_auroc().mean - 1e-9);
    assert!(plain.frame_auroc().mean >= pose.frame_auroc().mean - 1e-9);
    assert!(pose.frame_auroc().mean > emotion.frame_auroc().mean + 0.1);

    if let Ok(heldout_path) = std::env::var("MINT_DATASET_HELDOUT") {
        let heldout = mint_rvae::data::load_dataset(&heldout_path).expect("load held-out dataset");
        let single: Vec<SequenceRecord> =
            records.iter().filter(|r| r.env != Env::Env3).cloned().collect();
        let run_heldout = |augment: bool| {
            let pc = PipelineConfig {
                stride: 5,
                min_positive: 7,
                rule: DecisionRule::default(),
                detector: detector.clone(),
                vae: RvaeHyper::default(),
                augment,
                target_positive_fraction: 0.5,
            };
            mint_rvae::pipeline::heldout(&single, &heldout, &pc, 9100, "criterion9-heldout").unwrap().0
        };
        let aug = run_heldout(true);
        let plain = run_heldout(false);
        type Pick = fn(&mint_rvae::eval::EvalReport) -> f64;
        let picks: [(Pick, &str); 6] = [
            (|r| r.frame_auroc().mean, "frame auroc"),
            (|r| r.frame_macro_f1().mean, "frame macro-f1"),
            (|r| r.frame_balanced_accuracy().mean, "frame bal-acc"),
            (|r| r.sequence_auroc().mean, "seq auroc"),
            (|r| r.sequence_macro_f1().mean, "seq macro-f1"),
            (|r| r.sequence_balanced_accuracy().mean, "seq bal-acc"),
        ];
        for (pick, name) in picks {
            assert!(pick(&aug) > pick(&plain), "held-out {} did not improve with rebalancing", name);
        }
    }
    println!("criterion 9: PASS (full reproduction within tolerances)");
}
