//! One `manifest.json` per output directory, holding everything needed to
//! repeat the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hlcompete_core::experiments::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::{AnalyzeArgs, ClusterArgs, Failure, RenderArgs, SimulateArgs};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Fully resolved inputs of a run. Output directories are stored too but
/// replaced on replay.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolvedConfig {
    Simulate(SimulateArgs),
    Cluster(ClusterArgs),
    Render(RenderArgs),
    Analyze(AnalyzeArgs),
    Experiment(ExperimentConfig),
}

impl ResolvedConfig {
    pub fn command(&self) -> &'static str {
        match self {
            ResolvedConfig::Simulate(_) => "simulate",
            ResolvedConfig::Cluster(_) => "cluster",
            ResolvedConfig::Render(_) => "render",
            ResolvedConfig::Analyze(_) => "analyze",
            ResolvedConfig::Experiment(_) => "experiment",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            ResolvedConfig::Simulate(a) => Some(a.seed),
            ResolvedConfig::Cluster(a) => Some(a.seed),
            ResolvedConfig::Experiment(c) => Some(c.seed),
            ResolvedConfig::Render(_) | ResolvedConfig::Analyze(_) => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ResolvedConfig,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub output_dir: PathBuf,
    /// Files written, relative to `output_dir`.
    pub outputs: Vec<String>,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(config: ResolvedConfig, started_unix: f64, output_dir: &Path, outputs: &[PathBuf]) -> Self {
        Self {
            command: config.command().into(),
            seed: config.seed(),
            config,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix,
            finished_unix: now(),
            output_dir: output_dir.to_path_buf(),
            outputs: outputs
                .iter()
                .map(|p| p.strip_prefix(output_dir).unwrap_or(p).display().to_string())
                .collect(),
        }
    }

    pub fn write(&self) -> Result<PathBuf, Failure> {
        let path = self.output_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("malformed manifest {}: {e}", path.display())))
    }
}
