//! Scratch sweep for the rebalancing benchmark (dev only, removed before release).

use mint_rvae::data::synthetic::{make_records, SynthConfig};
use mint_rvae::data::window_sequences;
use mint_rvae::detectors::{Backbone, DetectorConfig, InputMode};
use mint_rvae::eval::DecisionRule;
use mint_rvae::mintrvae::RvaeHyper;
use mint_rvae::numerics::Rng;
use mint_rvae::pipeline::{run_fold, PipelineConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let noise: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.12);
    let train_seqs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(14);
    let pos_frac: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let det_hidden: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(32);
    let det_epochs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50);
    let vae_epochs: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(350);

    let mut data_rng = Rng::seed_from(810);
    let base = SynthConfig {
        sequences: train_seqs,
        frames_per_sequence: 45,
        positive_fraction: pos_frac,
        noise,
        ..Default::default()
    };
    let train = make_records(&base, &mut data_rng);
    let valid = make_records(&SynthConfig { sequences: 20, ..base.clone() }, &mut data_rng);

    let windows = window_sequences(&train, 15, 5, 7).windows;
    let pos = windows.iter().filter(|w| w.label == 1).count();
    println!(
        "benchmark: {} train sequences -> {} windows, {:.1}% positive | noise {} detH {} detE {} vaeE {}",
        train_seqs,
        windows.len(),
        100.0 * pos as f64 / windows.len() as f64,
        noise,
        det_hidden,
        det_epochs,
        vae_epochs
    );

    let detector = DetectorConfig {
        backbone: Backbone::Transformer,
        input_mode: InputMode::Multimodal,
        hidden: det_hidden,
        heads: 4,
        window: 15,
        epochs: det_epochs,
        patience: det_epochs,
        batch_size: 32,
        ..Default::default()
    };
    let vae_batch: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(64);
    let vae_hidden: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(64);
    let vae = RvaeHyper {
        epochs: vae_epochs,
        warmup_epochs: (vae_epochs as f64 * 7.14) as usize,
        batch_size: vae_batch,
        rnn_hidden: vae_hidden,
        ..Default::default()
    };

    if std::env::var("DIAG").is_ok() {
        let st = mint_rvae::data::Standardizer::fit(train.iter().flat_map(|r| &r.frames)).unwrap();
        let windows_std = window_sequences(&st.apply_records(&train), 15, 5, 7).windows;
        for fold_seed in [8101u64, 8102, 8103] {
            let mut rng = Rng::seed_from(fold_seed ^ 0x5641_4500);
            let mut model = mint_rvae::mintrvae::RvaeModel::new(vae.clone(), &mut rng);
            mint_rvae::mintrvae::train(&mut model, &windows_std, &mut rng).unwrap();
            let seeds: Vec<_> = windows_std.iter().flat_map(|w| w.frames.iter()).filter(|f| f.label == 1).cloned().collect();
            let mut gen_rng = Rng::seed_from(fold_seed ^ 0x53_414d50);
            let gens = mint_rvae::mintrvae::generate::generate(&mut model, 100, 15, &mut gen_rng, &seeds).unwrap();
            let accepted = gens.iter().filter(|g| g.record.frames.iter().filter(|f| f.label == 1).count() >= 7).count();
            println!("seed {}: accept rate {}/100", fold_seed, accepted);
        }
        return;
    }

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
            let t0 = std::time::Instant::now();
            let outcome = match run_fold(0, &train, &valid, &pc, seed) {
                Ok(o) => o,
                Err(e) => {
                    println!("seed {} aug={}: FAILED {}", seed, augment, e);
                    continue;
                }
            };
            let auroc = outcome.metrics.frame.auroc;
            println!(
                "seed {} {:>5}: frame AUROC {:.4} seq {:.4} (+{} synth) [{:.0?}]",
                seed,
                if augment { "aug" } else { "plain" },
                auroc,
                outcome.metrics.sequence.auroc,
                outcome.synthetic_added,
                t0.elapsed()
            );
            if augment {
                aug_mean += auroc / 3.0;
            } else {
                plain_mean += auroc / 3.0;
            }
        }
    }
    println!(
        "MEAN aug {:.4} vs plain {:.4}  ({})",
        aug_mean,
        plain_mean,
        if aug_mean >= plain_mean { "OK" } else { "FAIL" }
    );
}
