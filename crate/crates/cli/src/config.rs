//! Experiment configuration, read from TOML.
//!
//! Every section has defaults, so an empty file describes the reference
//! desk-scale experiment: 10000 synthetic digits over 10 IID clients, the
//! reference CNN, δ = 0.05 and decentralized unlearning of class 0. Unknown
//! keys are rejected. Relative paths are resolved against the working
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use fedunlearn::eval::{AttackConfig, Threshold};
use fedunlearn::explain::Selection;
use fedunlearn::fedsim::{TrainConfig, Weighting};
use fedunlearn::seed::derive_seed;
use fedunlearn::unlearn::Scheme;
use fedunlearn::Architecture;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub explain: ExplainSection,
    pub unlearn: UnlearnSection,
    pub attack: AttackConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("run"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            explain: ExplainSection::default(),
            unlearn: UnlearnSection::default(),
            attack: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Procedurally generated 28×28 digits.
    Synthetic,
    /// IDX image/label file pairs (the MNIST distribution format).
    Idx,
    /// Rows of `label,p0,p1,...` with pixels in 0..=255.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    /// One class per client; needs as many clients as classes.
    PerClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub class_count: usize,
    /// Generated count for synthetic data, cap on the loaded set otherwise
    /// (0 keeps every sample).
    pub train_samples: usize,
    pub test_samples: usize,
    /// IDX image file or CSV file.
    pub train_path: Option<PathBuf>,
    /// IDX label file; unused for CSV.
    pub train_labels: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Sample shape for CSV rows.
    pub image_shape: Vec<usize>,
    pub clients: usize,
    pub partition: PartitionMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            class_count: 10,
            train_samples: 10_000,
            test_samples: 2_000,
            train_path: None,
            train_labels: None,
            test_path: None,
            test_labels: None,
            image_shape: vec![1, 28, 28],
            clients: 10,
            partition: PartitionMode::Iid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// JSON architecture descriptor; the reference CNN when absent.
    pub descriptor: Option<PathBuf>,
}

impl ModelConfig {
    pub fn architecture(&self, sample_shape: &[usize], class_count: usize) -> Result<Architecture, CliError> {
        match &self.descriptor {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
            }
            None => {
                let shape: [usize; 3] = sample_shape.try_into().map_err(|_| {
                    CliError::config(format!(
                        "the reference architecture needs (channels, height, width) samples, got {sample_shape:?}"
                    ))
                })?;
                Architecture::reference(shape, class_count).map_err(|e| CliError::config(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub global_epochs: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub participation_fraction: f64,
    pub weighting: Weighting,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            global_epochs: t.global_epochs,
            // Two local passes per round; with one, membership signal on
            // the synthetic digits is too weak for the attack to measure.
            local_epochs: 2,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            participation_fraction: t.participation_fraction,
            weighting: t.weighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub delta: f64,
    /// Unlearning-class training samples in the probe set.
    pub probe_samples: usize,
    pub probe_batch: usize,
    pub selection: Selection,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            delta: 0.05,
            probe_samples: 256,
            probe_batch: fedunlearn::explain::DEFAULT_PROBE_BATCH,
            selection: Selection::Important,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnSection {
    pub enabled: bool,
    pub scheme: Scheme,
    pub target_class: usize,
    pub epochs: usize,
    /// Perturbation share per epoch; each holder's natural share when absent.
    pub perturbation_ratio: Option<f64>,
    /// Decentralized learning rate; the training rate when absent.
    pub learning_rate: Option<f64>,
    /// Training samples the server keeps for centralized unlearning.
    pub server_samples: usize,
    pub central_learning_rate: f64,
    pub central_batch_size: usize,
    /// Stop once unlearning-class test accuracy is at or below this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for UnlearnSection {
    fn default() -> Self {
        Self {
            enabled: true,
            scheme: Scheme::Decentralized,
            target_class: 0,
            epochs: 4,
            perturbation_ratio: None,
            learning_rate: None,
            server_samples: 1600,
            central_learning_rate: 0.01,
            central_batch_size: 64,
            stop_at_accuracy: None,
        }
    }
}

/// Config plus the exact bytes it was parsed from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::from_bytes(bytes)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CliError> {
        let text = std::str::from_utf8(&bytes).map_err(|_| CliError::config("config is not UTF-8"))?;
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        config.validate()?;
        Ok(Self { config, bytes })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(msg()))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        check(d.class_count >= 2, || "data.class_count must be at least 2".into())?;
        check(d.clients >= 1, || "data.clients must be at least 1".into())?;
        if d.source == DataSource::Synthetic {
            check(d.class_count == 10, || "synthetic digits have exactly 10 classes".into())?;
            check(d.train_samples >= d.clients && d.test_samples > 0, || {
                "synthetic data needs at least one training sample per client and a test set".into()
            })?;
        } else {
            check(d.train_path.is_some() && d.test_path.is_some(), || {
                "data.train_path and data.test_path are required for file sources".into()
            })?;
            if d.source == DataSource::Idx {
                check(d.train_labels.is_some() && d.test_labels.is_some(), || {
                    "data.train_labels and data.test_labels are required for IDX data".into()
                })?;
            }
        }
        if d.partition == PartitionMode::PerClass {
            check(d.clients == d.class_count, || {
                format!("per_class partition needs {} clients, got {}", d.class_count, d.clients)
            })?;
        }
        self.train_config()
            .validate()
            .map_err(|e| CliError::config(format!("train: {e}")))?;

        let e = &self.explain;
        check(e.delta > 0.0 && e.delta <= 1.0, || format!("explain.delta must lie in (0, 1], got {}", e.delta))?;
        check(e.probe_samples >= 1, || "explain.probe_samples must be at least 1".into())?;
        check(e.probe_batch >= 1, || "explain.probe_batch must be at least 1".into())?;

        let u = &self.unlearn;
        check(u.target_class < d.class_count, || {
            format!("unlearn.target_class {} outside [0, {})", u.target_class, d.class_count)
        })?;
        if let Some(r) = u.perturbation_ratio {
            check((0.0..=1.0).contains(&r), || format!("unlearn.perturbation_ratio must lie in [0, 1], got {r}"))?;
        }
        if let Some(lr) = u.learning_rate {
            check(lr > 0.0, || "unlearn.learning_rate must be positive".into())?;
        }
        check(u.central_learning_rate > 0.0, || "unlearn.central_learning_rate must be positive".into())?;
        check(u.central_batch_size >= 1, || "unlearn.central_batch_size must be at least 1".into())?;
        check(u.server_samples >= 1, || "unlearn.server_samples must be at least 1".into())?;

        if let Threshold::Fixed(t) = self.attack.threshold {
            check(!t.is_nan(), || "attack threshold is NaN".into())?;
        }
        check(self.attack.calibration_samples >= 1, || "attack.calibration_samples must be at least 1".into())?;
        Ok(())
    }

    /// Seed of a named random stream.
    pub fn stream_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            global_epochs: t.global_epochs,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            participation_fraction: t.participation_fraction,
            seed: self.stream_seed("train"),
            weighting: t.weighting,
        }
    }
}
