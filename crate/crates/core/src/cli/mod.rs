//! The reproduction driver: one subcommand per pipeline stage, all reading
//! the same TOML config, writing into one output directory, and fully
//! deterministic given a seed.

pub mod config;

pub use config::RunConfig;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::synthetic::{make_records, SynthConfig};
use crate::data::{
    load_dataset, load_standardizer, save_dataset, save_standardizer, stratified_kfold,
    window_sequences, DataError, Env, SequenceRecord, Standardizer, WindowSample,
};
use crate::detectors::{train_detector, Detector, DetectorConfig, InputMode};
use crate::eval::report::{write_loss_history_csv, write_pr_csv, write_roc_csv, write_trajectory_csv};
use crate::eval::{
    discriminative_score, onset_aligned_trajectories, precision_recall_sweep, threshold_grid,
    EvalReport, FoldMetrics,
};
use crate::mintrvae::{generate as vae_generate, train as vae_train, RvaeModel, RvaeSampler};
use crate::numerics::Rng;
use crate::pipeline::{self, evaluate_detector, EvalArrays};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, config or input files: exit code 2.
    Usage(String),
    /// Failure after inputs checked out: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "mint", version, about = "Intent-detection pipeline with generative minority-class rebalancing")]
struct Cli {
    /// TOML config file; flags below override its [run] section.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for every stage artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Desk-scale multiplier on epoch-denominated settings.
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic demo dataset (plus a held-out multi-person file).
    MakeSynthetic,
    /// Standardize the dataset and emit the windowing index.
    Preprocess,
    /// Train the sequence generator on the standardized windows.
    TrainVae,
    /// Sample synthetic windows from a trained generator.
    Generate,
    /// Train one intent detector (or the four ablation variants).
    TrainDetector {
        /// Train pose-only, emotion-only, multimodal and multimodal+VAE
        /// variants and print one result row each.
        #[arg(long)]
        ablation: bool,
    },
    /// Evaluate a detector checkpoint and emit report plus curve files.
    Evaluate,
    /// Stratified k-fold cross-validation over the configured variants.
    Crossval,
    /// Two-split held-out evaluation on the multi-person dataset.
    HeldoutEnv3,
    /// Real-vs-synthetic discriminative score.
    DiscriminativeScore,
}

pub fn main_entry() -> Result<(), CliError> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.run.out_dir = out.clone();
    }
    if let Some(scale) = cli.scale {
        config.run.scale = scale;
    }
    config.validate().map_err(CliError::Usage)?;
    std::fs::create_dir_all(&config.run.out_dir)
        .map_err(|e| usage(format!("cannot create output directory {}: {}", config.run.out_dir.display(), e)))?;

    match cli.command {
        Command::MakeSynthetic => cmd_make_synthetic(&config),
        Command::Preprocess => cmd_preprocess(&config),
        Command::TrainVae => cmd_train_vae(&config),
        Command::Generate => cmd_generate(&config),
        Command::TrainDetector { ablation } => cmd_train_detector(&config, ablation),
        Command::Evaluate => cmd_evaluate(&config),
        Command::Crossval => cmd_crossval(&config),
        Command::HeldoutEnv3 => cmd_heldout_env3(&config),
        Command::DiscriminativeScore => cmd_discriminative_score(&config),
    }
}

fn load_input(path: &Path) -> Result<Vec<SequenceRecord>, CliError> {
    match load_dataset(path) {
        Ok(records) if records.is_empty() => Err(usage(format!("{}: dataset is empty", path.display()))),
        Ok(records) => Ok(records),
        Err(e @ DataError::Io { .. }) => Err(usage(e)),
        Err(e) => Err(usage(format!("{}: {}", path.display(), e))),
    }
}

fn print_summary(records: &[SequenceRecord]) {
    for env in [Env::Env1, Env::Env2, Env::Env3] {
        let subset: Vec<&SequenceRecord> = records.iter().filter(|r| r.env == env).collect();
        if subset.is_empty() {
            continue;
        }
        let frames: usize = subset.iter().map(|r| r.frames.len()).sum();
        let positives: usize =
            subset.iter().flat_map(|r| &r.frames).filter(|f| f.label == 1).count();
        println!(
            "env{}: {} sequences, {} frames ({:.1}% intent)",
            u8::from(env),
            subset.len(),
            frames,
            100.0 * positives as f64 / frames as f64
        );
    }
}

fn cmd_make_synthetic(config: &RunConfig) -> Result<(), CliError> {
    let mut rng = Rng::seed_from(config.run.seed);
    let section = &config.synthetic;
    let half = section.sequences / 2;
    let base = SynthConfig {
        sequences: half,
        frames_per_sequence: section.frames_per_sequence,
        positive_fraction: section.positive_fraction,
        env: Env::Env1,
        noise: section.noise,
    };
    let mut records = make_records(&base, &mut rng);
    let env2 = SynthConfig { sequences: section.sequences - half, env: Env::Env2, ..base.clone() };
    records.extend(make_records(&env2, &mut rng));
    save_dataset(&records, &config.data.dataset).map_err(runtime)?;

    let env3 = SynthConfig { sequences: (section.sequences / 4).max(2), env: Env::Env3, ..base };
    let heldout = make_records(&env3, &mut rng);
    save_dataset(&heldout, &config.data.heldout_dataset).map_err(runtime)?;

    println!("wrote {} sequences to {}", records.len(), config.data.dataset.display());
    println!("wrote {} sequences to {}", heldout.len(), config.data.heldout_dataset.display());
    print_summary(&records);
    print_summary(&heldout);
    Ok(())
}

fn cmd_preprocess(config: &RunConfig) -> Result<(), CliError> {
    let records = load_input(&config.data.dataset)?;
    let standardizer =
        Standardizer::fit(records.iter().flat_map(|r| &r.frames)).map_err(usage)?;
    let standardized = standardizer.apply_records(&records);
    save_dataset(&standardized, config.standardized_path()).map_err(runtime)?;
    save_standardizer(&standardizer, config.standardizer_path()).map_err(runtime)?;

    let windows =
        window_sequences(&standardized, config.data.window, config.data.stride, config.data.min_positive);
    let mut index = String::from("record_id,start,window_label\n");
    for w in &windows.windows {
        index.push_str(&format!("{},{},{}\n", w.record_id, w.start, w.label));
    }
    std::fs::write(config.windows_path(), index).map_err(runtime)?;

    print_summary(&records);
    let positives = windows.windows.iter().filter(|w| w.label == 1).count();
    println!(
        "windows: {} total, {} positive ({:.1}%), {} record(s) shorter than {} skipped",
        windows.windows.len(),
        positives,
        100.0 * positives as f64 / windows.windows.len().max(1) as f64,
        windows.skipped_records,
        config.data.window
    );
    println!("standardized dataset: {}", config.standardized_path().display());
    Ok(())
}

fn load_standardized(config: &RunConfig) -> Result<Vec<SequenceRecord>, CliError> {
    let path = config.standardized_path();
    if !path.exists() {
        return Err(usage(format!("{} not found; run `mint preprocess` first", path.display())));
    }
    load_input(&path)
}

fn cmd_train_vae(config: &RunConfig) -> Result<(), CliError> {
    let records = load_standardized(config)?;
    let windows =
        window_sequences(&records, config.data.window, config.data.stride, config.data.min_positive);
    let mut rng = Rng::seed_from(config.run.seed);
    let mut model = RvaeModel::new(config.vae_hyper(), &mut rng);
    model.standardizer = load_standardizer(config.standardizer_path()).ok();
    let report = vae_train(&mut model, &windows.windows, &mut rng).map_err(runtime)?;
    model.save(config.vae_checkpoint_path()).map_err(runtime)?;
    write_loss_history_csv(config.vae_loss_path(), &report.history).map_err(runtime)?;
    let last = report.history.last().expect("training ran at least one epoch");
    println!(
        "trained {} epochs on {} windows; final losses: pose {:.4}, emotion {:.4}, label {:.4}, kl {:.4}",
        report.history.len(),
        windows.windows.len(),
        last.pose,
        last.emotion,
        last.label,
        last.kl
    );
    println!("checkpoint: {}", config.vae_checkpoint_path().display());
    Ok(())
}

fn cmd_generate(config: &RunConfig) -> Result<(), CliError> {
    let ckpt = config.vae_checkpoint_path();
    if !ckpt.exists() {
        return Err(usage(format!("{} not found; run `mint train-vae` first", ckpt.display())));
    }
    let mut model = RvaeModel::load(&ckpt).map_err(usage)?;
    let records = load_standardized(config)?;
    let windows =
        window_sequences(&records, config.data.window, config.data.stride, config.data.min_positive);
    let seeds: Vec<_> = windows
        .windows
        .iter()
        .flat_map(|w| w.frames.iter())
        .filter(|f| f.label == 1)
        .cloned()
        .collect();
    if seeds.is_empty() {
        return Err(usage("no minority-class frames to seed generation".to_string()));
    }
    let mut rng = Rng::seed_from(config.run.seed);
    let generated =
        vae_generate::generate(&mut model, config.generate.count, config.data.window, &mut rng, &seeds)
            .map_err(runtime)?;
    let mut invalid = 0usize;
    let records: Vec<SequenceRecord> = generated
        .iter()
        .map(|g| {
            for f in &g.record.frames {
                if f.validate().is_err() {
                    invalid += 1;
                }
            }
            g.record.clone()
        })
        .collect();
    save_dataset(&records, config.synthetic_path()).map_err(runtime)?;
    println!(
        "generated {} windows of {} frames; {} invalid frames",
        records.len(),
        config.data.window,
        invalid
    );
    println!("synthetic dataset: {}", config.synthetic_path().display());
    if invalid > 0 {
        return Err(runtime(format!("{} generated frames violate invariants", invalid)));
    }
    Ok(())
}

/// Fold 0 of a stratified k-fold over the standardized records, as the
/// standalone train/validation split.
fn standalone_split(
    config: &RunConfig,
    records: &[SequenceRecord],
) -> Result<(Vec<SequenceRecord>, Vec<SequenceRecord>), CliError> {
    let folds = stratified_kfold(records, config.data.kfold.max(2), config.run.seed).map_err(usage)?;
    let train = folds[0].train.iter().map(|&i| records[i].clone()).collect();
    let valid = folds[0].valid.iter().map(|&i| records[i].clone()).collect();
    Ok((train, valid))
}

fn augment_windows(
    config: &RunConfig,
    train_windows: Vec<WindowSample>,
    seed: u64,
) -> Result<(Vec<WindowSample>, usize), CliError> {
    let mut vae_rng = Rng::seed_from(seed ^ 0x5641_4500);
    let mut vae = RvaeModel::new(config.vae_hyper(), &mut vae_rng);
    vae_train(&mut vae, &train_windows, &mut vae_rng).map_err(runtime)?;
    let sampler_rng = Rng::seed_from(seed ^ 0x53_414d50);
    let mut sampler = RvaeSampler::new(&mut vae, &train_windows, config.data.min_positive, sampler_rng);
    let before = train_windows.len();
    let augmented = crate::data::rebalance(&train_windows, &mut sampler, config.detector.target_positive_fraction)
        .map_err(runtime)?;
    let added = augmented.len() - before;
    Ok((augmented, added))
}

fn variant_settings(config: &RunConfig, variant: &str) -> (DetectorConfig, bool) {
    let backbone = config.detector.config.backbone;
    let (mode, augment) = match variant {
        "pose_only" => (InputMode::PoseOnly, false),
        "emotion_only" => (InputMode::EmotionOnly, false),
        "multimodal" => (InputMode::Multimodal, false),
        _ => (InputMode::Multimodal, true),
    };
    let base = config.detector_config();
    let comparable = DetectorConfig::comparable(backbone, mode);
    let detector = DetectorConfig {
        backbone,
        input_mode: mode,
        hidden: comparable.hidden,
        blocks: comparable.blocks,
        heads: comparable.heads,
        window: base.window,
        lr: base.lr,
        batch_size: base.batch_size,
        epochs: base.epochs,
        patience: base.patience,
    };
    (detector, augment)
}

fn cmd_train_detector(config: &RunConfig, ablation: bool) -> Result<(), CliError> {
    let records = load_standardized(config)?;
    let (train_records, valid_records) = standalone_split(config, &records)?;
    let window_of = |records: &[SequenceRecord]| {
        window_sequences(records, config.data.window, config.data.stride, config.data.min_positive).windows
    };
    let train_windows = window_of(&train_records);
    let valid_windows = window_of(&valid_records);

    if ablation {
        println!("variant, frame_auroc, frame_macro_f1, frame_bal_acc, seq_auroc, seq_macro_f1, seq_bal_acc");
        for variant in ["pose_only", "emotion_only", "multimodal", "multimodal_vae"] {
            let (det_config, augment) = variant_settings(config, variant);
            let mut windows = train_windows.clone();
            let mut added = 0;
            if augment {
                (windows, added) = augment_windows(config, windows, config.run.seed)?;
            }
            let mut rng = Rng::seed_from(config.run.seed);
            let (mut detector, _) =
                train_detector(det_config.clone(), &windows, &valid_windows, &mut rng).map_err(runtime)?;
            let pc = config.pipeline(det_config, augment);
            let (frame, seq, _) = evaluate_detector(&mut detector, &valid_records, &pc).map_err(runtime)?;
            println!(
                "{}{}, {:.4}, {:.4}, {:.4}, {:.4}, {:.4}, {:.4}",
                variant,
                if added > 0 { format!(" (+{} synthetic)", added) } else { String::new() },
                frame.auroc,
                frame.macro_f1,
                frame.balanced_accuracy,
                seq.auroc,
                seq.macro_f1,
                seq.balanced_accuracy
            );
        }
        return Ok(());
    }

    let mut windows = train_windows;
    let mut added = 0;
    if config.detector.augment {
        (windows, added) = augment_windows(config, windows, config.run.seed)?;
    }
    let mut rng = Rng::seed_from(config.run.seed);
    let det_config = config.detector_config();
    let (detector, history) =
        train_detector(det_config, &windows, &valid_windows, &mut rng).map_err(runtime)?;
    detector.save(config.detector_checkpoint_path()).map_err(runtime)?;

    let mut csv = String::from("epoch,train_loss,valid_frame_auroc\n");
    for (i, e) in history.epochs.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            i,
            e.train_loss,
            e.valid_auroc.map(|a| a.to_string()).unwrap_or_default()
        ));
    }
    std::fs::write(config.detector_history_path(), csv).map_err(runtime)?;
    println!(
        "trained {} epochs ({} windows, {} synthetic); best epoch {}{}",
        history.epochs.len(),
        windows.len(),
        added,
        history.best_epoch,
        if history.stopped_early { ", stopped early" } else { "" }
    );
    println!("checkpoint: {}", config.detector_checkpoint_path().display());
    Ok(())
}

fn write_curves(config: &RunConfig, arrays: &EvalArrays) -> Result<(), CliError> {
    let out = &config.run.out_dir;
    write_roc_csv(
        out.join("roc_frame.csv"),
        &crate::eval::report::roc_points(&arrays.frame_scores, &arrays.frame_labels),
    )
    .map_err(runtime)?;
    write_roc_csv(
        out.join("roc_seq.csv"),
        &crate::eval::report::roc_points(&arrays.seq_scores, &arrays.seq_labels),
    )
    .map_err(runtime)?;
    let grid = threshold_grid(config.eval.grid_points);
    let sweep = precision_recall_sweep(&arrays.window_probs, &arrays.seq_labels, &grid, &config.rule())
        .map_err(runtime)?;
    write_pr_csv(out.join("pr_sweep.csv"), &sweep).map_err(runtime)?;
    if !arrays.onset_trajectories.is_empty() {
        let traj =
            onset_aligned_trajectories(&arrays.onset_trajectories, config.eval.onset_lo, config.eval.onset_hi)
                .map_err(runtime)?;
        write_trajectory_csv(out.join("onset_traj.csv"), &traj).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let ckpt = config.detector_checkpoint_path();
    if !ckpt.exists() {
        return Err(usage(format!("{} not found; run `mint train-detector` first", ckpt.display())));
    }
    let mut detector = Detector::load(&ckpt).map_err(usage)?;
    let records = load_standardized(config)?;
    let pc = config.pipeline(detector.config.clone(), false);
    let (frame, sequence, arrays) = evaluate_detector(&mut detector, &records, &pc).map_err(runtime)?;
    let report = EvalReport::new("evaluate", vec![FoldMetrics { fold: 0, frame, sequence }]);
    report.write(config.run.out_dir.join("report.txt")).map_err(runtime)?;
    write_curves(config, &arrays)?;
    print!("{}", report.render());
    println!("curves written to {}", config.run.out_dir.display());
    Ok(())
}

fn cmd_crossval(config: &RunConfig) -> Result<(), CliError> {
    let records = load_input(&config.data.dataset)?;
    let mut combined = String::new();
    for variant in &config.crossval.variants {
        let (det_config, augment) = variant_settings(config, variant);
        let pc = config.pipeline(det_config, augment);
        let (report, outcomes) =
            pipeline::crossval(&records, config.data.kfold, &pc, config.run.seed, variant)
                .map_err(runtime)?;
        let frame = report.frame_auroc();
        let seq = report.sequence_auroc();
        println!(
            "{}: frame AUROC {:.3} ± {:.3}, seq AUROC {:.3} ± {:.3}",
            variant, frame.mean, frame.std, seq.mean, seq.std
        );
        combined.push_str(&report.render());
        combined.push('\n');
        if let Some(first) = outcomes.first() {
            write_curves(config, &first.arrays)?;
        }
    }
    std::fs::write(config.run.out_dir.join("crossval_report.txt"), combined).map_err(runtime)?;
    println!("report: {}", config.run.out_dir.join("crossval_report.txt").display());
    Ok(())
}

fn cmd_heldout_env3(config: &RunConfig) -> Result<(), CliError> {
    let single = load_input(&config.data.dataset)?;
    let heldout = load_input(&config.data.heldout_dataset)?;
    let mut combined = String::new();
    for variant in ["multimodal", "multimodal_vae"] {
        let (det_config, augment) = variant_settings(config, variant);
        let pc = config.pipeline(det_config, augment);
        let (report, _) =
            pipeline::heldout(&single, &heldout, &pc, config.run.seed, variant).map_err(runtime)?;
        let frame = report.frame_auroc();
        let seq = report.sequence_auroc();
        println!(
            "{}: frame AUROC {:.3} ± {:.3}, seq AUROC {:.3} ± {:.3}",
            variant, frame.mean, frame.std, seq.mean, seq.std
        );
        combined.push_str(&report.render());
        combined.push('\n');
    }
    std::fs::write(config.run.out_dir.join("heldout_report.txt"), combined).map_err(runtime)?;
    println!("report: {}", config.run.out_dir.join("heldout_report.txt").display());
    Ok(())
}

fn cmd_discriminative_score(config: &RunConfig) -> Result<(), CliError> {
    let real_records = load_standardized(config)?;
    let synth_path = config.synthetic_path();
    if !synth_path.exists() {
        return Err(usage(format!("{} not found; run `mint generate` first", synth_path.display())));
    }
    let synth_records = load_input(&synth_path)?;
    let real_windows: Vec<WindowSample> =
        window_sequences(&real_records, config.data.window, config.data.stride, config.data.min_positive)
            .windows
            .into_iter()
            .filter(|w| w.label == 1)
            .collect();
    let synth_windows: Vec<WindowSample> = synth_records
        .iter()
        .map(|r| {
            WindowSample::new(r.id.clone(), r.env, 0, r.frames.clone(), config.data.min_positive)
        })
        .collect();
    let mut rng = Rng::seed_from(config.run.seed);
    let ds = discriminative_score(&real_windows, &synth_windows, &mut rng).map_err(runtime)?;
    println!(
        "real minority windows: {}, synthetic windows: {}",
        real_windows.len(),
        synth_windows.len()
    );
    println!("held-out accuracy = {:.3}, discriminative score D = {:.3}", ds.accuracy, ds.score);
    Ok(())
}
