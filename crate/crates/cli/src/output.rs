//! Output directory: CSV tables plus a manifest of hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct OutDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutDir {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn is_empty(&self) -> bool {
        self.written.is_empty()
    }

    /// Record of the run. Contains no timestamps, so reruns with the same
    /// inputs produce the same file.
    pub fn finish(mut self, command: &str, config: &Path, config_sha: &str, seed: u64) -> Result<()> {
        if self.written.is_empty() {
            return Ok(());
        }
        let manifest = Manifest {
            command: command.to_string(),
            config: config
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            config_sha256: config_sha.to_string(),
            seed,
            versions: BTreeMap::from([
                ("tgfso".to_string(), tgfso::VERSION.to_string()),
                ("tgfso-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            outputs: std::mem::take(&mut self.written),
        };
        self.write_json(&format!("manifest-{command}.json"), &manifest)
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config: String,
    config_sha256: String,
    seed: u64,
    versions: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}
