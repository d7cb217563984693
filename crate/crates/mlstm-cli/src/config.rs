//! Optional JSON config file. Values here override built-in defaults and
//! are overridden in turn by explicit flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub hidden: Option<usize>,
    pub dim: Option<usize>,
    pub rho: Option<f64>,
    pub eps_ada: Option<f64>,
    pub clip: Option<f64>,
    pub shuffle: Option<bool>,
    pub tau: Option<String>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub users: Option<usize>,
    pub mean_edits: Option<usize>,
    pub separability: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let parsed = serde_json::from_str(&text)
            .map_err(|e| mlstm::Error::Config(e.to_string()))
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(parsed)
    }
}

/// defaults < config < flag
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
