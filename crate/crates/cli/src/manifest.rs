use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use decal_core::train::TrainConfig;
use decal_core::Split;
use serde::{Deserialize, Serialize};

use crate::args::{FeatureFormat, Strategy};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A fully resolved command. Replaying a plan reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Plan {
    Train {
        data: PathBuf,
        p: usize,
        q: usize,
        r: usize,
        config: TrainConfig,
        out: PathBuf,
    },
    Search {
        data: PathBuf,
        strategy: Strategy,
        max_iterations: usize,
        config: TrainConfig,
        cache_dir: PathBuf,
        out: PathBuf,
    },
    Evaluate {
        data: PathBuf,
        model: PathBuf,
        split: Split,
        out: Option<PathBuf>,
    },
    ExportFeatures {
        data: PathBuf,
        model: PathBuf,
        format: FeatureFormat,
        out: PathBuf,
    },
    Stats {
        data: PathBuf,
        out: Option<PathBuf>,
    },
}

impl Plan {
    pub fn name(&self) -> &'static str {
        match self {
            Plan::Train { .. } => "train",
            Plan::Search { .. } => "search",
            Plan::Evaluate { .. } => "evaluate",
            Plan::ExportFeatures { .. } => "export-features",
            Plan::Stats { .. } => "stats",
        }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        match self {
            Plan::Train { out, .. } | Plan::Search { out, .. } | Plan::ExportFeatures { out, .. } => Some(out),
            Plan::Evaluate { out, .. } | Plan::Stats { out, .. } => out.as_deref(),
        }
    }

    pub fn with_out(mut self, new_out: PathBuf) -> Self {
        match &mut self {
            Plan::Train { out, .. } | Plan::Search { out, .. } | Plan::ExportFeatures { out, .. } => *out = new_out,
            Plan::Evaluate { out, .. } | Plan::Stats { out, .. } => *out = Some(new_out),
        }
        self
    }

    pub fn data(&self) -> &Path {
        match self {
            Plan::Train { data, .. }
            | Plan::Search { data, .. }
            | Plan::Evaluate { data, .. }
            | Plan::ExportFeatures { data, .. }
            | Plan::Stats { data, .. } => data,
        }
    }

    pub fn config(&self) -> Option<&TrainConfig> {
        match self {
            Plan::Train { config, .. } | Plan::Search { config, .. } => Some(config),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignatureInfo {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub d: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub dataset: PathBuf,
    pub signature: Option<SignatureInfo>,
    pub train_config: Option<TrainConfig>,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub build_id: String,
    pub outputs: Vec<PathBuf>,
    pub plan: Plan,
}

impl Manifest {
    pub fn new(plan: Plan, signature: Option<SignatureInfo>, started: SystemTime, outputs: Vec<PathBuf>) -> Self {
        let config = plan.config().cloned();
        Manifest {
            command: plan.name().to_owned(),
            dataset: plan.data().to_owned(),
            signature,
            seed: config.as_ref().map(|c| c.seed),
            train_config: config,
            started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_seconds: started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0),
            build_id: env!("DECAL_BUILD_ID").to_owned(),
            outputs,
            plan,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes =
            fs::read(path).map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
