//! Strict JSON configs. Unknown keys are rejected everywhere so a typo never
//! silently falls back to a default.

use std::path::{Path, PathBuf};

use aia_core::data::{BinningParams, PoissonConfig};
use aia_core::{NeuronModel, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where a run gets its samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generate class-template Poisson patterns on the fly.
    Poisson(PoissonConfig),
    /// A cache written by `gen-data`. Relative paths resolve against the
    /// config file. With `params_hash` set, a cache built from other
    /// parameters is rejected.
    Cache {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params_hash: Option<String>,
    },
}

fn default_model() -> NeuronModel {
    NeuronModel::Lif
}

fn default_hidden() -> Vec<usize> {
    vec![128]
}

fn default_test_fraction() -> f64 {
    1.0 / 3.0
}

/// Config shared by `train`, `eval` and `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: NeuronModel,
    /// Hidden layer widths; input and output widths come from the data.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub data: DataSource,
    /// Per-class fraction of samples held out for testing.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsSource {
    pub manifest: PathBuf,
    pub binning: BinningParams,
    /// Defaults to the largest label + 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GenDataConfig {
    Poisson(PoissonConfig),
    Events(EventsSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub timesteps: usize,
    pub batch: usize,
    /// Bernoulli probability of each input spike.
    pub input_rate: f64,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            input_width: 4,
            hidden: vec![4],
            classes: 3,
            timesteps: 3,
            batch: 2,
            input_rate: 0.6,
            seed: 0,
            step: 1e-4,
            tolerance: 1e-3,
        }
    }
}

/// Parses a config file; serde's message names the offending key.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(text)
}

/// Resolves `path` against the directory holding the config file.
pub fn resolve(config_path: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(path)
    }
}
