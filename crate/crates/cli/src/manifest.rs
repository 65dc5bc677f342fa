use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const FILE_NAME: &str = "run.toml";

/// Record written next to every command's outputs. It embeds the
/// configuration text, so `--config <dir>/run.toml` re-runs the command.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    /// SHA-256 of `config`.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub resume: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub config: String,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Configuration text and the manifest it came from, if any.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub text: String,
    pub from_manifest: Option<RunManifest>,
}

/// Reads a configuration file. A run manifest is accepted in place of a
/// configuration when it was written by the same command.
pub fn read_config(path: &Path, command: &str) -> Result<ConfigSource> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if let Ok(m) = toml::from_str::<RunManifest>(&text) {
        if m.command != command {
            return Err(CliError::Config(format!(
                "{} is a manifest for `{}`, not `{command}`",
                path.display(),
                m.command
            )));
        }
        if hash(&m.config) != m.config_hash {
            return Err(CliError::Data(format!("{}: configuration hash mismatch", path.display())));
        }
        return Ok(ConfigSource { text: m.config.clone(), from_manifest: Some(m) });
    }
    Ok(ConfigSource { text, from_manifest: None })
}

pub fn parse<T: serde::de::DeserializeOwned>(src: &ConfigSource) -> Result<T> {
    toml::from_str(&src.text).map_err(|e| CliError::Config(e.to_string()))
}

impl RunManifest {
    pub fn new(command: &str, src: &ConfigSource, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: hash(&src.text),
            seed,
            resume: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0.0,
            config: src.text.clone(),
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        let text = toml::to_string(&self).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(dir.join(FILE_NAME), text)?;
        Ok(())
    }
}
