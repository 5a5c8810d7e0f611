//! Per-run index of output files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::fnv1a;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    /// FNV-1a of the contents, hex.
    pub fnv1a64: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn new(command: &str, master_seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: "spikelab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed,
            config: serde_json::to_value(config)?,
            files: Vec::new(),
        })
    }

    /// Describe `files` and write `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
        for f in files {
            let bytes = std::fs::read(f)?;
            let rel = f.strip_prefix(dir).unwrap_or(f);
            self.files.push(ManifestFile {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: bytes.len() as u64,
                fnv1a64: format!("{:016x}", fnv1a(bytes.iter().copied())),
            });
        }
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_files_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        std::fs::write(&f, "x\n1\n").unwrap();
        let m = Manifest::new("sweep", 3, &serde_json::json!({"n": 4})).unwrap();
        let path = m.write(dir.path(), &[f]).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back.files[0].path, "a.csv");
        assert_eq!(back.files[0].bytes, 4);
        assert_eq!(back.command, "sweep");
    }
}
