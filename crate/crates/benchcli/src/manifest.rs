//! Run manifests: resolved config, seeds and output digests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::experiment::Replication;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<Replication>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub fn digests(root: &Path, files: &[std::path::PathBuf]) -> Result<Vec<OutputDigest>, CliError> {
    let mut out: Vec<OutputDigest> = files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(root).unwrap_or(f);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            Ok(OutputDigest {
                path,
                sha256: sha256_file(f)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

impl RunManifest {
    pub fn write(&self, root: &Path) -> Result<std::path::PathBuf, CliError> {
        let path = root.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let m: Self = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("manifest: {e}")))?;
        m.config.validate()?;
        Ok(m)
    }
}

/// Reads a TOML config, or the resolved config embedded in a manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("config: cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(RunManifest::from_json(&text)?.config)
    } else {
        ExperimentConfig::from_toml(&text)
    }
}
