//! Scenario runner behind the `qnd` binary.

pub mod config;
pub mod output;
pub mod scenarios;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use config::{Config, ConfigError, RawConfig};
use output::Artifacts;
use scenarios::ShotSeeds;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] qnd_core::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        use qnd_core::Error as E;
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Core(E::Domain(_) | E::Input(_) | E::Csv(_)) => EXIT_CONFIG,
            RunError::Core(E::Numerical { .. } | E::Insufficient(_)) => EXIT_NUMERICAL,
            // An unreadable config or input stream is a bad invocation, not a failed run.
            RunError::File { .. } | RunError::Csv(_) => EXIT_CONFIG,
            RunError::Core(E::Io(_)) | RunError::Io(_) | RunError::Json(_) => EXIT_IO,
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::File { path: path.to_path_buf(), source })
}

/// Run manifest written next to the artifacts.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub scenario: String,
    pub version: String,
    /// Resolved configuration in `key = value` form, output directory excluded.
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub seeds: Vec<ShotSeeds>,
}

impl Manifest {
    /// The recorded configuration as a config file.
    pub fn config_text(&self) -> String {
        self.config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Runs `cfg` and returns the artifacts including `manifest.json`.
pub fn execute(cfg: &Config) -> Result<Artifacts, RunError> {
    let mut outcome = scenarios::run(cfg)?;
    let manifest = Manifest {
        scenario: cfg.scenario.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        artifacts: outcome.artifacts.names(),
        seeds: outcome.seeds,
    };
    outcome.artifacts.add("resolved.conf", cfg.to_text().into_bytes());
    outcome.artifacts.add_json("manifest.json", &manifest)?;
    Ok(outcome.artifacts)
}

/// Layers defaults, an optional file and command-line assignments, in that order.
pub fn load_config(file: Option<&Path>, overrides: &[String]) -> Result<RawConfig, RunError> {
    let mut raw = RawConfig::default();
    if let Some(path) = file {
        raw.apply_text(&read_file(path)?)?;
    }
    for o in overrides {
        raw.apply_override(o)?;
    }
    Ok(raw)
}
