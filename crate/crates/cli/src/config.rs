//! Experiment configuration: one serializable document that, together with
//! its seed, reproduces a run.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use gridfuse::data::GeneratorConfig;
use gridfuse::power::PowerConfig;
use gridfuse::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub power: PowerConfig,
    /// Cross-validation fold count.
    pub folds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            train: TrainConfig::default(),
            power: PowerConfig::default(),
            folds: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(gridfuse::Error::from)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&PathBuf>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Applies one master seed to every seeded component.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.generator.seed = seed;
            self.train.seed = seed;
        }
    }
}

/// Everything needed to replay a command, dropped next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub command: String,
    pub strategy: Option<String>,
    pub config: ExperimentConfig,
}

impl RunSnapshot {
    pub fn write(&self, dir: &Path, stem: &str) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{stem}.config.json"));
        let text = serde_json::to_string_pretty(self).map_err(gridfuse::Error::from)?;
        crate::util::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
