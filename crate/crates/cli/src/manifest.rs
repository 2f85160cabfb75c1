//! Run manifests: config echo, derived seeds, input checksums, outputs.
//!
//! Manifests contain no timestamps or machine state, so a rerun with the
//! same inputs writes a byte-identical manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{internal_error, user_error, CliResult};

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub workers: usize,
    pub stage_seeds: BTreeMap<&'static str, u64>,
    pub config: &'a RunConfig,
    /// Input path -> sha256 of contents.
    pub inputs: BTreeMap<String, String>,
    /// Output files, relative to the run's output directory.
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    #[serde(skip)]
    out_dir: PathBuf,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig, out_dir: &Path) -> Self {
        Manifest {
            command,
            seed: config.seed,
            workers: config.workers,
            stage_seeds: config.stage_seeds(),
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs
            .insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Checksum every regular file under a directory (sorted, recursive).
    pub fn add_input_dir(&mut self, dir: &Path) -> CliResult<()> {
        for file in sorted_files(dir)? {
            self.add_input(&file)?;
        }
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        let shown = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.outputs.push(shown.display().to_string());
    }

    pub fn count(&mut self, key: &str, value: u64) {
        self.counts.insert(key.to_string(), value);
    }

    pub fn write(&self) -> CliResult<PathBuf> {
        let path = self.out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| internal_error(format!("manifest serialization: {e}")))?;
        fs::write(&path, json + "\n")
            .map_err(|e| internal_error(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path)
        .map_err(|e| user_error(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| user_error(format!("cannot read {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("sha256:{:x}", hasher.finalize()))
}

pub fn sorted_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| user_error(format!("cannot read directory {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| user_error(format!("{}: {e}", dir.display())))?;
        let path = entry.path();
        if path.is_dir() {
            files.extend(sorted_files(&path)?);
        } else {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn ensure_out_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)
        .map_err(|e| internal_error(format!("cannot create {}: {e}", out.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| internal_error(format!("serialization: {e}")))?;
    fs::write(path, json + "\n")
        .map_err(|e| internal_error(format!("writing {}: {e}", path.display())))
}
