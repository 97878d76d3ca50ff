//! File output helpers: hashing, atomic-ish writes and the run manifest.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_owned(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Result rows of a parameter sweep: `x,value,ci`.
pub fn xy_ci_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("x,value,ci\n");
    for (x, v, ci) in rows {
        s.push_str(&format!("{x:e},{v:e},{ci:e}\n"));
    }
    s
}

/// Provenance record written next to every output set.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub runtime_seconds: f64,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(path, &text)
    }
}
