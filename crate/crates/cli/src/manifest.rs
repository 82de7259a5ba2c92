use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run, written next to its outputs.
#[derive(Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_file: Option<PathBuf>,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub version: &'static str,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub results: BTreeMap<String, Value>,
    pub wall_time_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| bae_oed::Error::Io {
        path: Some(path.to_path_buf()),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects inputs, outputs, seeds and results while a command runs.
pub struct Recorder {
    started: Instant,
    pub seeds: BTreeMap<String, u64>,
    pub results: BTreeMap<String, Value>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new() -> Self {
        Self {
            started: Instant::now(),
            seeds: BTreeMap::new(),
            results: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.push(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }

    pub fn seed(&mut self, name: &str, v: u64) {
        self.seeds.insert(name.into(), v);
    }

    pub fn result(&mut self, name: &str, v: impl Into<Value>) {
        self.results.insert(name.into(), v.into());
    }

    pub fn finish(
        self,
        command_line: Vec<String>,
        config_file: Option<PathBuf>,
        config: Value,
        path: &Path,
    ) -> Result<PathBuf, CliError> {
        let digest = |ps: &[PathBuf]| -> Result<Vec<FileDigest>, CliError> {
            ps.iter()
                .map(|p| {
                    Ok(FileDigest {
                        path: p.clone(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let m = RunManifest {
            command_line,
            config_file,
            config,
            seeds: self.seeds,
            version: env!("CARGO_PKG_VERSION"),
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            results: self.results,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(path, text + "\n").map_err(|e| bae_oed::Error::Io {
            path: Some(path.to_path_buf()),
            source: e,
        })?;
        Ok(path.to_path_buf())
    }
}
