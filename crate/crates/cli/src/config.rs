//! Experiment recipes: one TOML file per network, overridable from flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bnsurrogate_core::dataset::{EvidenceMode, GenerationConfig, DEFAULT_P_OBS};
use bnsurrogate_core::eval::DEFAULT_THRESHOLDS;
use bnsurrogate_core::nn::ModelConfig;
use bnsurrogate_core::rng::RngSeed;
use bnsurrogate_core::sampler::DEFAULT_LWS_SAMPLES;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Relative paths are resolved against the recipe file's directory.
    pub network: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n: usize,
    pub p_obs: f64,
    pub mode: String,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            n: 10_000,
            p_obs: DEFAULT_P_OBS,
            mode: EvidenceMode::Uniform.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub use_bias: bool,
    /// Share of the training split held out for early stopping.
    pub validation_fraction: f64,
    /// Use only the first `train_size` training examples (all when unset).
    pub train_size: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![100, 150, 100, 50],
            l2_lambda: ModelConfig::DEFAULT_L2_LAMBDA,
            learning_rate: ModelConfig::DEFAULT_LEARNING_RATE,
            momentum: ModelConfig::DEFAULT_MOMENTUM,
            batch_size: ModelConfig::DEFAULT_BATCH_SIZE,
            max_epochs: ModelConfig::DEFAULT_MAX_EPOCHS,
            early_stop_patience: ModelConfig::DEFAULT_PATIENCE,
            use_bias: true,
            validation_fraction: 0.1,
            train_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub lws_samples: usize,
    /// Number of test examples used for the side-by-side comparison.
    pub subset: usize,
    pub thresholds: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            lws_samples: DEFAULT_LWS_SAMPLES,
            subset: 320,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sizes: vec![100, 200, 500, 1000, 5000],
        }
    }
}

impl ExperimentConfig {
    /// Defaults for a network file, named after its stem.
    pub fn for_network(path: impl Into<PathBuf>) -> Self {
        let network = path.into();
        let name = network
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "network".into());
        ExperimentConfig {
            name,
            network,
            seed: 0,
            data: DataSection::default(),
            model: ModelSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading recipe {}", path.display()))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing recipe {}", path.display()))?;
        if config.network.is_relative() {
            if let Some(dir) = path.parent() {
                config.network = dir.join(&config.network);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.network.exists() {
            bail!("network file {} does not exist", self.network.display());
        }
        self.generation().validate()?;
        if !(0.0..1.0).contains(&self.model.validation_fraction) {
            bail!("validation_fraction must lie in [0, 1)");
        }
        if self.eval.subset == 0 {
            bail!("evaluation subset must contain at least one example");
        }
        if self.eval.lws_samples == 0 {
            bail!("lws_samples must be at least 1");
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<EvidenceMode> {
        Ok(self.data.mode.parse()?)
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            n: self.data.n,
            p_obs: self.data.p_obs,
            mode: self.mode().unwrap_or_default(),
            seed: RngSeed(self.seed),
        }
    }

    pub fn model_config(&self, total_dim: usize) -> ModelConfig {
        let m = &self.model;
        let mut c = ModelConfig::with_hidden(total_dim, &m.hidden);
        c.l2_lambda = m.l2_lambda;
        c.learning_rate = m.learning_rate;
        c.momentum = m.momentum;
        c.batch_size = m.batch_size;
        c.max_epochs = m.max_epochs;
        c.early_stop_patience = m.early_stop_patience;
        c.use_bias = m.use_bias;
        c
    }

    /// Short hash of the data-generation settings.
    pub fn data_fingerprint(&self) -> String {
        fingerprint(&(&self.name, self.seed, &self.data))
    }

    /// Short hash of everything that determines a trained model.
    pub fn model_fingerprint(&self) -> String {
        fingerprint(&(&self.name, self.seed, &self.data, &self.model))
    }

    /// Short hash of the whole recipe.
    pub fn fingerprint(&self) -> String {
        fingerprint(&(&self.name, self.seed, &self.data, &self.model, &self.eval))
    }
}

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
