//! Run configuration: one JSON file per run, flag overrides on top.
//!
//! Precedence is flag > file > default. Unknown keys are rejected. All
//! randomness flows from the single global `seed`, split per stage with
//! [`songvec_core::rng::derive_seed`]; the derived stage seeds land in the
//! run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use songvec_core::corpus::CorpusConfig;
use songvec_core::features::MelConfig;
use songvec_core::joint::JointConfig;
use songvec_core::rng::derive_seed;
use songvec_core::sgns::SgnsConfig;

use crate::{user_error, CliResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub general_corpus: Option<PathBuf>,
    pub music_corpus: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub supervision: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub tag_metadata: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub corpus: CorpusConfig,
    pub sgns: SgnsConfig,
    pub mel: MelConfig,
    pub joint: JointConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            workers: 1,
            corpus: CorpusConfig::default(),
            sgns: SgnsConfig::default(),
            mel: MelConfig::default(),
            joint: JointConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| user_error(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| user_error(format!("invalid config {}: {e}", path.display())))
    }

    /// Per-stage seeds derived from the global seed.
    pub fn stage_seeds(&self) -> BTreeMap<&'static str, u64> {
        ["corpus", "sgns", "joint", "features"]
            .into_iter()
            .map(|stage| (stage, derive_seed(self.seed, stage, &[])))
            .collect()
    }

    pub fn corpus_seed(&self) -> u64 {
        derive_seed(self.seed, "corpus", &[])
    }

    /// SGNS config with the derived stage seed and effective worker count.
    pub fn sgns_effective(&self) -> SgnsConfig {
        SgnsConfig {
            seed: derive_seed(self.seed, "sgns", &[]),
            workers: self.workers,
            ..self.sgns.clone()
        }
    }

    pub fn joint_effective(&self) -> JointConfig {
        JointConfig {
            seed: derive_seed(self.seed, "joint", &[]),
            ..self.joint.clone()
        }
    }
}

/// Pick the first present path: CLI flag, then config file entry.
pub fn resolve_path(
    flag: Option<&PathBuf>,
    config_entry: Option<&PathBuf>,
    what: &str,
) -> CliResult<PathBuf> {
    flag.or(config_entry).cloned().ok_or_else(|| {
        user_error(format!(
            "no {what} given: pass the flag or set paths.{} in the config file",
            what.replace('-', "_")
        ))
    })
}

/// Fail with exit code 2 when an input path does not exist.
pub fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if !path.exists() {
        return Err(user_error(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}
