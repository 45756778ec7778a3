// SPDX-License-Identifier: MIT OR Apache-2.0

//! Provenance sidecar written next to every output.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Every option as resolved, defaults included.
    pub config: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
    pub versions: BTreeMap<String, String>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("assimlab".into(), env!("CARGO_PKG_VERSION").into());
        Self {
            command: command.into(),
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions,
            started_unix_s: now(),
            finished_unix_s: 0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.config.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    /// Hashes a file, or every regular file below a directory.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                self.push_hash(&f)?;
            }
        } else {
            self.push_hash(path)?;
        }
        Ok(self)
    }

    fn push_hash(&mut self, p: &Path) -> Result<()> {
        self.inputs.push(InputHash {
            path: p.display().to_string(),
            sha256: sha256_file(p)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<primary>.manifest.json`.
    pub fn write_beside(&mut self, primary: &Path) -> Result<PathBuf> {
        self.finished_unix_s = now();
        let mut name = primary.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = primary.with_file_name(name);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
