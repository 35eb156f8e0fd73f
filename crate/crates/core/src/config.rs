//! Run configuration: one TOML file per experiment.
//!
//! ```toml
//! [paths]
//! data_root = "data"          # HIGHWAY_LSTM_DATA_ROOT overrides this
//! raw = "raw/trajectories.txt"
//!
//! [model]
//! variant = "reference"
//! hidden = 32                 # optional; shrinks the network for desk-scale runs
//! seed = 1
//!
//! [train]
//! full_passes = 2
//! ```
//!
//! Every section and key is optional; missing values take the defaults below.
//! Relative paths are resolved against `data_root`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{HorizonSpec, ScalingSpec};
use crate::neural::{ModelConfig, Variant};
use crate::smoothing::FilterSpec;
use crate::synthetic::SynthSpec;
use crate::training::TrainSchedule;

/// Environment variable that replaces `paths.data_root`.
pub const DATA_ROOT_ENV: &str = "HIGHWAY_LSTM_DATA_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown model variant {0:?}")]
    UnknownVariant(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_root: PathBuf,
    /// Source trajectory file.
    pub raw: PathBuf,
    /// Column map for `raw`; the US-101 layout when absent.
    pub column_map: Option<PathBuf>,
    pub tracks: PathBuf,
    pub features: PathBuf,
    pub split: PathBuf,
    pub windows: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_root: PathBuf::from("data"),
            raw: PathBuf::from("raw/trajectories.txt"),
            column_map: None,
            tracks: PathBuf::from("tracks.csv"),
            features: PathBuf::from("features.csv"),
            split: PathBuf::from("split.csv"),
            windows: PathBuf::from("windows.bin"),
            checkpoints: PathBuf::from("checkpoints"),
            reports: PathBuf::from("reports"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: String,
    /// LSTM width; dense widths shrink in proportion. Full size when absent.
    pub hidden: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { variant: Variant::Reference.name().to_string(), hidden: None, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_ratio: f64,
    /// Fraction of the training vehicles held out for model selection.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_ratio: 0.8, validation_fraction: 0.1, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BagSection {
    /// Names of the trained models to choose from (checkpoint file stems).
    pub candidates: Vec<String>,
    pub members: usize,
    pub name: String,
}

impl Default for BagSection {
    fn default() -> Self {
        BagSection { candidates: Vec::new(), members: 4, name: "bagged".to_string() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub vehicles: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub filter: FilterSpec,
    pub scaling: ScalingSpec,
    pub horizons: HorizonSpec,
    pub model: ModelSection,
    pub train: TrainSchedule,
    pub split: SplitSection,
    pub bag: BagSection,
    pub predict: PredictSection,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.variant()?;
        self.filter.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scaling.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.horizons.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.split.train_ratio > 0.0 && self.split.train_ratio <= 1.0) {
            return Err(ConfigError::Invalid("split.train_ratio must be in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.split.validation_fraction) {
            return Err(ConfigError::Invalid("split.validation_fraction must be in [0, 1)".into()));
        }
        if self.model.hidden == Some(0) {
            return Err(ConfigError::Invalid("model.hidden must be positive".into()));
        }
        if self.train.minibatch_size == 0 || self.train.group_size == 0 {
            return Err(ConfigError::Invalid("train.minibatch_size and train.group_size must be positive".into()));
        }
        Ok(())
    }

    pub fn variant(&self) -> Result<Variant, ConfigError> {
        Variant::parse(&self.model.variant).ok_or_else(|| ConfigError::UnknownVariant(self.model.variant.clone()))
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let config = self.variant()?.config(self.horizons.output_size());
        Ok(match self.model.hidden {
            Some(h) => config.scaled(h),
            None => config,
        })
    }

    /// Checkpoint stem of the configured model: `<variant>-seed<seed>`.
    pub fn model_name(&self) -> String {
        format!("{}-seed{}", self.model.variant, self.model.seed)
    }

    /// Data root after applying the environment override.
    pub fn data_root(&self) -> PathBuf {
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.paths.data_root.clone(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.data_root().join(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.full_passes, 20);
        assert_eq!(c.model_config().unwrap().input_size, 49);
        assert_eq!(c.model_name(), "reference-seed1");
    }

    #[test]
    fn sections_override() {
        let c = RunConfig::from_toml_str(
            "[model]\nvariant = \"no-ff\"\nhidden = 16\nseed = 4\n[train]\nfull_passes = 2\n[horizons]\nhorizons_s = [1, 2]\n",
        )
        .unwrap();
        let m = c.model_config().unwrap();
        assert_eq!((m.input_size, m.lstm_layers.clone(), m.output_size), (44, vec![16], 4));
        assert_eq!(c.train.full_passes, 2);
        assert_eq!(c.train.epochs_per_group, 5);
    }

    #[test]
    fn every_variant_name_is_accepted() {
        for v in Variant::ALL {
            let c = RunConfig::from_toml_str(&format!("[model]\nvariant = \"{}\"\n", v.name())).unwrap();
            assert_eq!(c.variant().unwrap(), v);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_toml_str("[model]\nvariant = \"huge\"\n"), Err(ConfigError::UnknownVariant(_))));
        assert!(matches!(RunConfig::from_toml_str("[train]\nepochs = 3\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml_str("[split]\ntrain_ratio = 1.5\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml_str("[filter]\nwindow_length = 10\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.model.hidden = Some(8);
        c.bag.candidates = vec!["a".into(), "b".into()];
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }
}
