//! Pipeline configuration file, shared by every subcommand.
//!
//! All fields are optional; flags given on the command line override the
//! file. Example:
//!
//! ```json
//! {
//!   "seed": 7,
//!   "output_dir": "run",
//!   "manifest": "run/dataset/manifest.json",
//!   "spectral_k": 16,
//!   "n_pca": 10,
//!   "k_clusters": 6,
//!   "training": { "epochs": 60 },
//!   "phases": { "checkerboard": { "order": 2, "weight_mode": "uniform" } }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ccnn_core::ccnn::{CcnnConfig, WeightMode};
use ccnn_core::datagen::GenerationPlan;
use ccnn_core::training::{default_training_points, TrainConfig, TrainingPoints};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_P_FLIP: f64 = 0.03;

/// Architecture and regularization of one phase's model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub order: usize,
    pub n_filters: usize,
    pub filter_size: usize,
    pub weight_mode: WeightMode,
    pub nonneg_beta: bool,
    pub gamma: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        let m = CcnnConfig::default();
        Self {
            order: m.order,
            n_filters: m.n_filters,
            filter_size: m.filter_size,
            weight_mode: m.weight_mode,
            nonneg_beta: m.nonneg_beta,
            gamma: TrainConfig::default().gamma,
        }
    }
}

/// Optimizer settings shared by all phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub lr0: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub val_fraction: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr0: t.lr0,
            batch_size: t.batch_size,
            epochs: t.epochs,
            val_fraction: t.val_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Existing dataset manifest; when absent, commands that need data
    /// look for `<output_dir>/dataset/manifest.json`.
    pub manifest: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Plan for `generate`; the built-in 16 × 8 grid when absent.
    pub generation: Option<GenerationPlan>,
    pub p_flip: f64,
    pub spectral_k: usize,
    pub n_pca: usize,
    pub k_clusters: usize,
    pub patience: usize,
    pub training_points: Option<TrainingPoints>,
    pub training: TrainingSettings,
    pub phases: BTreeMap<String, Architecture>,
    pub threshold: f64,
    pub fourier_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            manifest: None,
            ground_truth: None,
            generation: None,
            p_flip: DEFAULT_P_FLIP,
            spectral_k: ccnn_core::spectral::DEFAULT_K,
            n_pca: 10,
            k_clusters: 6,
            patience: ccnn_core::unsupervised::DEFAULT_PATIENCE,
            training_points: None,
            training: TrainingSettings::default(),
            phases: BTreeMap::new(),
            threshold: ccnn_core::interpret::DEFAULT_THRESHOLD,
            fourier_k: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Ok(ccnn_core::io::read_json(p)?),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.output_dir.join("dataset").join("manifest.json"))
    }

    pub fn ground_truth_path(&self) -> Option<PathBuf> {
        self.ground_truth.clone().or_else(|| {
            let p = self.manifest_path().with_file_name("ground_truth.json");
            p.exists().then_some(p)
        })
    }

    pub fn training_points(&self) -> TrainingPoints {
        self.training_points.clone().unwrap_or_else(default_training_points)
    }

    pub fn architecture(&self, phase: &str) -> Architecture {
        self.phases.get(phase).copied().unwrap_or_default()
    }

    pub fn train_config(&self, phase: &str, lattice: usize) -> Result<TrainConfig, CliError> {
        let a = self.architecture(phase);
        if !(2..=3).contains(&a.order) {
            return Err(CliError::Usage(format!("order must be 2 or 3, got {}", a.order)));
        }
        let cfg = TrainConfig {
            model: CcnnConfig {
                lattice,
                order: a.order,
                n_filters: a.n_filters,
                filter_size: a.filter_size,
                weight_mode: a.weight_mode,
                nonneg_beta: a.nonneg_beta,
            },
            lr0: self.training.lr0,
            batch_size: self.training.batch_size,
            gamma: a.gamma,
            epochs: self.training.epochs,
            seed: self.seed,
            val_fraction: self.training.val_fraction,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let cfg = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let text = serde_json::to_string(&cfg).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
