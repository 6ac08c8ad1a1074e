//! Config files and flag resolution: flags win over the config file, which
//! wins over the built-in defaults.

use std::fs;
use std::path::Path;

use decal_core::train::{EarlyStopping, TrainConfig};
use serde::Deserialize;

use crate::args::TrainFlags;
use crate::CliError;

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub r: Option<usize>,
    pub d: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub label_smoothing: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub weight_decay: Option<f64>,
    pub grad_clip: Option<f64>,
    pub early_stop_patience: Option<usize>,
    pub early_stop_min_delta: Option<f64>,
    pub max_iterations: Option<usize>,
    pub budget_epochs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

pub fn resolve_train(flags: &TrainFlags, file: &FileConfig) -> TrainConfig {
    let defaults = TrainConfig::default();
    let patience = flags.early_stop_patience.or(file.early_stop_patience);
    TrainConfig {
        d: flags.d.or(file.d).unwrap_or(defaults.d),
        epochs: flags.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(defaults.learning_rate),
        seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
        label_smoothing: flags.label_smoothing.or(file.label_smoothing).unwrap_or(defaults.label_smoothing),
        adam_beta1: file.adam_beta1.unwrap_or(defaults.adam_beta1),
        adam_beta2: file.adam_beta2.unwrap_or(defaults.adam_beta2),
        adam_eps: file.adam_eps.unwrap_or(defaults.adam_eps),
        weight_decay: flags.weight_decay.or(file.weight_decay).unwrap_or(defaults.weight_decay),
        grad_clip: flags.grad_clip.or(file.grad_clip).or(defaults.grad_clip),
        early_stopping: patience
            .map(|patience| EarlyStopping { patience, min_delta: file.early_stop_min_delta.unwrap_or(0.0) }),
    }
}
