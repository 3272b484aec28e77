//! Output directories and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use covsteer::SolverConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex SHA-256 of a file's bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Record of one command invocation, written after everything else.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<SolverConfig>,
    /// Wall time per stage, in seconds.
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

/// Collects written files and stage timings for the manifest.
pub(crate) struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    /// Writes the manifest; it lists itself last.
    pub fn finish(
        mut self,
        command: &str,
        problem_hash: Option<String>,
        config: Option<SolverConfig>,
        exit_code: i32,
    ) -> Result<RunManifest, CliError> {
        let path = self.path(MANIFEST_FILE);
        self.files.push(path.clone());
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            problem_hash,
            config_echo: config,
            timings: self.timings,
            outputs: self.files.iter().map(|p| p.display().to_string()).collect(),
            exit_code: Some(exit_code),
        };
        let text = covsteer::json::to_string_pretty(&manifest).map_err(|e| CliError::Invalid(e.to_string()))?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
