//! Output files and the run manifest.
//!
//! Outputs are rendered in memory, then each is written to a temporary file
//! and renamed into place. The manifest goes last, so its presence means
//! every listed output is complete.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lrt_core::micro::RunStats;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
}

#[derive(Clone, Debug, Serialize)]
pub struct CacheRecord {
    pub cache: CacheStatus,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub threads: usize,
    pub table: Option<CacheRecord>,
    pub run_stats: RunStatsRecord,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RunStatsRecord {
    pub steps: u64,
    pub saturated: u64,
    pub saturated_fraction: f64,
}

impl From<RunStats> for RunStatsRecord {
    fn from(s: RunStats) -> Self {
        Self {
            steps: s.steps,
            saturated: s.saturated,
            saturated_fraction: s.saturated_fraction(),
        }
    }
}

/// Rendered outputs of one command, in emission order.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(name, e))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Writes every output into `dir` and returns their checksums.
    pub fn write(&self, dir: &Path) -> Result<Vec<OutputRecord>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        self.files
            .iter()
            .map(|(name, bytes)| {
                write_atomic(&dir.join(name), bytes)?;
                Ok(OutputRecord {
                    file: name.clone(),
                    bytes: bytes.len(),
                    sha256: hex::encode(Sha256::digest(bytes)),
                })
            })
            .collect()
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest<'_>) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::io(MANIFEST, e))?;
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &bytes)
}

/// Writes `bytes` next to `path` and renames the result into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path.display(), e)
    })
}
