//! Per-command output directory with a manifest of what was written.
//!
//! `manifest.toml` records the command, the effective configuration and the
//! SHA-256 of every artifact. Timing logs are listed separately without a
//! hash since wall-clock values differ between runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{LiftError, Result};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub artifacts: Vec<Artifact>,
    pub diagnostics: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| crate::error::LiftError::parse(path.display().to_string(), 0, e.message()))
    }

    pub fn hash_of(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.path == name).map(|a| a.sha256.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects artifacts written under one directory.
pub struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    pub fn create(dir: &Path, command: &str, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                artifacts: Vec::new(),
                diagnostics: Vec::new(),
                config: config.clone(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `bytes` to `name` and records its hash.
    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.record(name, bytes);
        Ok(path)
    }

    /// Lets `write` produce the file, then hashes what landed on disk.
    pub fn file(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write(&path)?;
        let bytes = std::fs::read(&path)?;
        self.record(name, &bytes);
        Ok(path)
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let sha256 = sha256_hex(bytes);
        match self.manifest.artifacts.iter_mut().find(|a| a.path == name) {
            Some(a) => a.sha256 = sha256,
            None => self.manifest.artifacts.push(Artifact {
                path: name.to_string(),
                sha256,
            }),
        }
    }

    /// Unhashed output such as a timing log.
    pub fn diagnostic(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, text)?;
        if !self.manifest.diagnostics.iter().any(|d| d == name) {
            self.manifest.diagnostics.push(name.to_string());
        }
        Ok(path)
    }

    pub fn finish(self) -> Result<Manifest> {
        let text = toml::to_string(&self.manifest).map_err(|e| LiftError::Config(format!("cannot write manifest: {e}")))?;
        std::fs::write(self.dir.join(MANIFEST_NAME), text)?;
        Ok(self.manifest)
    }
}
