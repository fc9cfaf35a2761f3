//! Run directories.
//!
//! ```text
//! <run>/
//!   manifest.json     RunManifest
//!   config.toml       effective TrainConfig
//!   train.jsonl       one StepRecord per line
//!   checkpoints/      step-NNNNNN.ckpt at the configured cadence
//!   final.ckpt
//! ```

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use fpseg::data::DatabaseEntry;
use fpseg::training::{TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const LOG: &str = "train.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 of the executable that produced the run.
    pub code_version: String,
    pub command: Vec<String>,
    pub config: TrainConfig,
    pub mode: TrainMode,
    /// `ra-runet`, `runet`, or `runet-full (approximate)`.
    pub variant: String,
    pub seed: u64,
    pub data_root: PathBuf,
    pub source_databases: Vec<String>,
    pub target_databases: Vec<String>,
    pub catalog: Vec<DatabaseEntry>,
    pub output_dir: PathBuf,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn code_version() -> String {
    let hash = || -> std::io::Result<String> {
        let mut file = std::fs::File::open(std::env::current_exe()?)?;
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
        Ok(hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    };
    hash().unwrap_or_else(|e| format!("unknown ({e})"))
}
