//! Run configuration: a TOML file with one section per stage, every field
//! defaulted, unknown keys rejected. Command-line flags override the
//! `[run]` section.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Env;
use crate::detectors::DetectorConfig;
use crate::eval::DecisionRule;
use crate::mintrvae::RvaeHyper;
use crate::pipeline::PipelineConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Multiplies the epoch-denominated settings (generator epochs and
    /// warm-up, detector epochs) for desk-scale runs.
    pub scale: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 7, out_dir: PathBuf::from("out"), scale: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Box-normalized (pre-standardization) dataset file.
    pub dataset: PathBuf,
    /// Held-out multi-person dataset for the two-split protocol.
    pub heldout_dataset: PathBuf,
    pub window: usize,
    pub stride: usize,
    pub min_positive: usize,
    pub kfold: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset: PathBuf::from("dataset.jsonl"),
            heldout_dataset: PathBuf::from("heldout.jsonl"),
            window: 15,
            stride: 5,
            min_positive: 7,
            kfold: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    #[serde(flatten)]
    pub config: DetectorConfig,
    /// Rebalance the training windows with the trained generator.
    pub augment: bool,
    pub target_positive_fraction: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { config: DetectorConfig::default(), augment: false, target_positive_fraction: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub threshold: f64,
    pub k_run: usize,
    pub grid_points: usize,
    pub onset_lo: i64,
    pub onset_hi: i64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { threshold: 0.5, k_run: 7, grid_points: 99, onset_lo: -30, onset_hi: 30 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub count: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection { count: 100 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub sequences: usize,
    pub frames_per_sequence: usize,
    pub positive_fraction: f64,
    pub env: u8,
    pub noise: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection { sequences: 40, frames_per_sequence: 60, positive_fraction: 0.55, env: 1, noise: 0.02 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossvalSection {
    /// Which ablation rows to run: any of `pose_only`, `emotion_only`,
    /// `multimodal`, `multimodal_vae`.
    pub variants: Vec<String>,
}

impl Default for CrossvalSection {
    fn default() -> Self {
        CrossvalSection {
            variants: vec![
                "pose_only".into(),
                "emotion_only".into(),
                "multimodal".into(),
                "multimodal_vae".into(),
            ],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub vae: RvaeHyper,
    pub detector: DetectorSection,
    pub eval: EvalSection,
    pub generate: GenerateSection,
    pub synthetic: SyntheticSection,
    pub crossval: CrossvalSection,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {}", path.display(), e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| format!("config {}: {}", path.display(), e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.vae.validate()?;
        self.detector.config.validate()?;
        if self.run.scale <= 0.0 {
            return Err(format!("scale must be positive, got {}", self.run.scale));
        }
        if !(0.0..1.0).contains(&self.eval.threshold) || self.eval.threshold == 0.0 {
            return Err(format!("eval threshold must be in (0, 1), got {}", self.eval.threshold));
        }
        if Env::try_from(self.synthetic.env).is_err() {
            return Err(format!("synthetic env must be 1, 2 or 3, got {}", self.synthetic.env));
        }
        for v in &self.crossval.variants {
            if !matches!(v.as_str(), "pose_only" | "emotion_only" | "multimodal" | "multimodal_vae") {
                return Err(format!("unknown crossval variant {:?}", v));
            }
        }
        Ok(())
    }

    /// The decision rule shared by sequence-level metrics.
    pub fn rule(&self) -> DecisionRule {
        DecisionRule { threshold: self.eval.threshold, k_run: self.eval.k_run, window: self.data.window }
    }

    /// Epoch-scaled generator hyperparameters with the window length taken
    /// from the data section.
    pub fn vae_hyper(&self) -> RvaeHyper {
        let mut hyper = self.vae.clone().scaled(self.run.scale);
        hyper.window = self.data.window;
        hyper
    }

    /// Epoch-scaled detector config with the shared window length.
    pub fn detector_config(&self) -> DetectorConfig {
        let mut config = self.detector.config.clone();
        config.window = self.data.window;
        config.epochs = ((config.epochs as f64 * self.run.scale).round() as usize).max(1);
        config
    }

    pub fn pipeline(&self, detector: DetectorConfig, augment: bool) -> PipelineConfig {
        PipelineConfig {
            stride: self.data.stride,
            min_positive: self.data.min_positive,
            rule: self.rule(),
            detector,
            vae: self.vae_hyper(),
            augment,
            target_positive_fraction: self.detector.target_positive_fraction,
        }
    }

    // Stage output paths, all under the output directory.

    pub fn standardized_path(&self) -> PathBuf {
        self.run.out_dir.join("standardized.jsonl")
    }

    pub fn standardizer_path(&self) -> PathBuf {
        self.run.out_dir.join("standardizer.json")
    }

    pub fn windows_path(&self) -> PathBuf {
        self.run.out_dir.join("windows.csv")
    }

    pub fn vae_checkpoint_path(&self) -> PathBuf {
        self.run.out_dir.join("vae.ckpt")
    }

    pub fn vae_loss_path(&self) -> PathBuf {
        self.run.out_dir.join("vae_loss.csv")
    }

    pub fn synthetic_path(&self) -> PathBuf {
        self.run.out_dir.join("synthetic.jsonl")
    }

    pub fn detector_checkpoint_path(&self) -> PathBuf {
        self.run.out_dir.join("detector.ckpt")
    }

    pub fn detector_history_path(&self) -> PathBuf {
        self.run.out_dir.join("detector_history.csv")
    }
}
