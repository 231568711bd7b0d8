use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Realization `index` at ring length `length`, drawn from stream `index` of `base_seed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub length: usize,
    pub index: u64,
    pub base_seed: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    /// SHA-256 of the canonical `config.toml`.
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<SeedRecord>,
    pub files: Vec<FileRecord>,
    /// Set when the run aborted and the outputs are incomplete.
    pub partial: bool,
}

impl RunManifest {
    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is always serializable") + "\n"
    }

    /// Checks every listed file against its checksum and rejects files the manifest does not list.
    ///
    /// Subdirectories are ignored so a report can live inside the run directory.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = dir.join(&f.name);
            let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(HarnessError::Report(format!("checksum mismatch for {}", f.name)));
            }
        }
        let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
            if entry.file_type().map_err(|e| HarnessError::io(entry.path(), e))?.is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST_FILE && !self.files.iter().any(|f| f.name == name) {
                return Err(HarnessError::Report(format!("unknown file {name} in run directory")));
            }
        }
        Ok(())
    }
}
