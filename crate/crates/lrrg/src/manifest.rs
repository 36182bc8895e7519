//! Run manifests: config echo, input digests, artifacts and timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::fsutil::{atomic_write, sha256_file};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<FileDigest> {
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
            bytes: std::fs::metadata(path)?.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    pub timings: Timings,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Collects inputs and artifacts during a command and writes the manifest
/// last.
pub struct ManifestBuilder {
    command: String,
    config: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    started_unix: f64,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> ManifestBuilder {
        ManifestBuilder {
            command: command.into(),
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started_unix: unix_now(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(path.into());
    }

    pub fn artifacts(&self) -> &[PathBuf] {
        &self.artifacts
    }

    /// Digests every named file (failing if one is missing) and writes the
    /// manifest to `path`.
    pub fn finish(self, path: &Path) -> anyhow::Result<RunManifest> {
        let digest = |p: &PathBuf| {
            FileDigest::of(p).map_err(|e| anyhow::anyhow!("declared file {} is not readable: {e}", p.display()))
        };
        let manifest = RunManifest {
            command: self.command,
            version: VERSION.into(),
            config: self.config,
            inputs: self.inputs.iter().map(digest).collect::<anyhow::Result<_>>()?,
            artifacts: self.artifacts.iter().map(digest).collect::<anyhow::Result<_>>()?,
            timings: Timings {
                started_unix: self.started_unix,
                finished_unix: unix_now(),
                wall_seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        atomic_write(path, &json)?;
        Ok(manifest)
    }
}
