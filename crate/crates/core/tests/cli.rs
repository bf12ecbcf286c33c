//! End-to-end checks of the `mint` binary: exit codes, stage isolation,
//! and byte-level determinism of the preprocessing outputs.

use std::path::Path;
use std::process::Command;

fn mint() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mint"))
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    let base = format!(
        "[run]\nseed = 11\nout_dir = {:?}\nscale = 0.02\n\n\
         [data]\ndataset = {:?}\nheldout_dataset = {:?}\n\n\
         [synthetic]\nsequences = 8\nframes_per_sequence = 30\n\n\
         [detector]\nbackbone = \"gru\"\nhidden = 8\nepochs = 100\n\n{}",
        dir.join("out").to_str().unwrap(),
        dir.join("dataset.jsonl").to_str().unwrap(),
        dir.join("heldout.jsonl").to_str().unwrap(),
        extra
    );
    std::fs::write(&path, base).unwrap();
    path
}

#[test]
fn missing_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = mint().arg("--config").arg(&config).arg("preprocess").output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[run]\nseed = 1\nnot_a_field = 3\n").unwrap();
    let out = mint().arg("--config").arg(&config).arg("preprocess").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not_a_field"), "stderr: {}", stderr);
}

#[test]
fn malformed_dataset_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    std::fs::write(dir.path().join("dataset.jsonl"), "{\"id\": \"x\", \"env\": 7, \"frames\": []}\n").unwrap();
    let out = mint().arg("--config").arg(&config).arg("preprocess").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 1"), "stderr: {}", stderr);
}

#[test]
fn preprocess_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    assert!(mint().arg("--config").arg(&config).arg("make-synthetic").status().unwrap().success());
    assert!(mint().arg("--config").arg(&config).arg("preprocess").status().unwrap().success());
    let read = |name: &str| std::fs::read(dir.path().join("out").join(name)).unwrap();
    let first: Vec<Vec<u8>> =
        ["standardized.jsonl", "standardizer.json", "windows.csv"].iter().map(|n| read(n)).collect();
    assert!(mint().arg("--config").arg(&config).arg("preprocess").status().unwrap().success());
    let second: Vec<Vec<u8>> =
        ["standardized.jsonl", "standardizer.json", "windows.csv"].iter().map(|n| read(n)).collect();
    assert_eq!(first, second, "re-running preprocess must reproduce outputs byte-for-byte");
}

#[test]
fn stage_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[generate]\ncount = 12\n\n[crossval]\nvariants = [\"multimodal\"]\n");
    for stage in ["make-synthetic", "preprocess", "train-vae", "generate", "train-detector", "evaluate"] {
        let out = mint().arg("--config").arg(&config).arg(stage).output().unwrap();
        assert!(
            out.status.success(),
            "{} failed: {}\n{}",
            stage,
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out_dir = dir.path().join("out");
    for artifact in [
        "standardized.jsonl",
        "standardizer.json",
        "windows.csv",
        "vae.ckpt",
        "vae_loss.csv",
        "synthetic.jsonl",
        "detector.ckpt",
        "detector_history.csv",
        "report.txt",
        "roc_frame.csv",
        "roc_seq.csv",
        "pr_sweep.csv",
    ] {
        assert!(out_dir.join(artifact).exists(), "missing artifact {}", artifact);
    }

    // Generated output must itself load as a valid dataset.
    let synth = mint_rvae::data::load_dataset(out_dir.join("synthetic.jsonl")).unwrap();
    assert_eq!(synth.len(), 12);
    for record in &synth {
        assert_eq!(record.frames.len(), 15);
    }

    let score = mint().arg("--config").arg(&config).arg("discriminative-score").output().unwrap();
    assert!(score.status.success());
    let stdout = String::from_utf8_lossy(&score.stdout);
    assert!(stdout.contains("discriminative score D ="), "stdout: {}", stdout);
}

#[test]
fn evaluate_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    assert!(mint().arg("--config").arg(&config).arg("make-synthetic").status().unwrap().success());
    assert!(mint().arg("--config").arg(&config).arg("preprocess").status().unwrap().success());
    let out = mint().arg("--config").arg(&config).arg("evaluate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
