//! Run configuration read from TOML. Every training default follows the
//! published hyper-parameter table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfusion::KfConfig;
use crate::retrieval::{DEFAULT_MAX_NGRAM, DEFAULT_TOP_M};
use crate::semodel::ModelConfig;
use crate::uncertainty::DEFAULT_SAMPLES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled AdamW decay; biases and LayerNorm parameters are exempt.
    pub weight_decay: f64,
    /// Fraction of all steps spent in linear warm-up before linear decay.
    pub warmup_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-5,
            weight_decay: 0.1,
            warmup_ratio: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(Error::Config(format!("warmup_ratio {} outside [0, 1]", self.warmup_ratio)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// MC-dropout candidates per sentence.
    pub k: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { k: DEFAULT_SAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Plain-text knowledge corpus, one sentence per line.
    pub corpus: Option<PathBuf>,
    /// Prebuilt index; preferred over `corpus` when both are set.
    pub index: Option<PathBuf>,
    pub top_m: usize,
    pub max_ngram: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            corpus: None,
            index: None,
            top_m: DEFAULT_TOP_M,
            max_ngram: DEFAULT_MAX_NGRAM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Loss weight of positions outside the uncertain component.
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { alpha: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// POS inventory file, one tag per line.
    pub tagset: Option<PathBuf>,
    /// Inline alternative to `tagset`.
    pub pos_tags: Option<Vec<String>>,
    /// `slash` or `char-column`.
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    /// Knowledge-fusion encoder; mirrors `model` when absent.
    pub kf_model: Option<KfConfig>,
    pub training: TrainConfig,
    pub kf_training: TrainConfig,
    pub sampling: SamplingConfig,
    pub retrieval: RetrievalConfig,
    pub fusion: FusionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            kf_model: None,
            training: TrainConfig::default(),
            kf_training: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            retrieval: RetrievalConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads `path`, resolving relative data paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.data.tagset,
            &mut config.retrieval.corpus,
            &mut config.retrieval.index,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kf_config(&self) -> KfConfig {
        self.kf_model.unwrap_or_else(|| KfConfig::mirroring(&self.model))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.kf_config().validate()?;
        self.training.validate()?;
        self.kf_training.validate()?;
        if self.sampling.k == 0 {
            return Err(Error::Config("sampling.k must be positive".into()));
        }
        if self.retrieval.top_m == 0 {
            return Err(Error::Config("retrieval.top_m must be positive".into()));
        }
        if self.retrieval.max_ngram < 2 {
            return Err(Error::Config("retrieval.max_ngram must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.fusion.alpha) {
            return Err(Error::Config(format!("fusion.alpha {} outside [0, 1]", self.fusion.alpha)));
        }
        if self.data.tagset.is_some() && self.data.pos_tags.is_some() {
            return Err(Error::Config("set data.tagset or data.pos_tags, not both".into()));
        }
        if let Some(f) = &self.data.format {
            f.parse::<crate::corpus::CorpusFormat>()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}
