//! Run manifests: what went in, what came out, and their digests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "demandml-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory for outputs; as given for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub crate_version: String,
    pub seed: u64,
    /// Digest of the canonical JSON of the effective configuration.
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Files under `dir`, as sorted `/`-separated relative paths.
pub fn list_files(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    Ok(files
        .iter()
        .map(|p| {
            p.strip_prefix(dir)
                .expect("walked below dir")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect())
}

/// Digest over the sorted (relative path, file digest) pairs of every file
/// under `dir` except the manifest, whose wall-clock fields vary per run.
pub fn directory_digest(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let mut h = Sha256::new();
    for rel in list_files(dir)? {
        if rel == MANIFEST_FILE {
            continue;
        }
        h.update(rel.as_bytes());
        h.update([0u8]);
        h.update(sha256_file(dir.join(&rel))?.as_bytes());
        h.update([b'\n']);
    }
    Ok(hex::encode(h.finalize()))
}

/// Collects a run's inputs and outputs while it executes.
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<ManifestBuilder> {
        let canonical = serde_json::to_vec(config)?;
        Ok(ManifestBuilder {
            command: command.to_string(),
            seed,
            config_sha256: sha256_bytes(&canonical),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Every file under a directory, in sorted order.
    pub fn input_dir(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for rel in list_files(dir)? {
            if rel != MANIFEST_FILE {
                self.input(dir.join(rel))?;
            }
        }
        Ok(())
    }

    /// Declares a file written by the run (path relative to the output dir).
    pub fn output(&mut self, rel: impl Into<PathBuf>) {
        self.outputs.push(rel.into());
    }

    /// Digests the declared outputs and writes `manifest.json` into `out_dir`.
    pub fn finish(self, out_dir: impl AsRef<Path>) -> Result<RunManifest> {
        let out_dir = out_dir.as_ref();
        let mut outputs = Vec::new();
        for rel in &self.outputs {
            let rel_s = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            outputs.push(FileDigest {
                sha256: sha256_file(out_dir.join(rel))?,
                path: rel_s,
            });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let m = RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            command: self.command,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            config_sha256: self.config_sha256,
            inputs: self.inputs,
            outputs,
            started_unix_s: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_s: self.clock.elapsed().as_secs_f64(),
        };
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&path, e))?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
