//! Output directory handling and the run manifest.
//!
//! Every command funnels its files through [`OutputSet`], which checksums
//! them and closes the run with a `manifest.json`. Reruns with the same
//! config and seed produce identical data files and identical checksum
//! lists; only the manifest's wall-clock field differs.

use crate::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub threads: usize,
    pub config: serde_json::Value,
    pub outputs: Vec<ManifestEntry>,
    pub wall_ms: u128,
}

pub struct OutputSet {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
    started: Instant,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest = hasher.finalize();
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            sha256,
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        master_seed: Option<u64>,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            tool: "sdmimo",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            master_seed,
            threads: rayon::current_num_threads(),
            config,
            outputs: self.entries,
            wall_ms: self.started.elapsed().as_millis(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Config(format!("manifest serialization failed: {e}")))?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Versioned comment header shared by every CSV the tool emits.
pub fn csv_header() -> String {
    format!("# sdmimo {} schema 1\n", env!("CARGO_PKG_VERSION"))
}
