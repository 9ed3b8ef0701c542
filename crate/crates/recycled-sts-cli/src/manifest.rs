//! Run manifests, emitted alongside every output artifact so any table can
//! be reproduced from the manifest alone.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::AppError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// The invoked command line.
    pub command: String,
    /// Hash of the run's inputs (hex).
    pub config_hash: String,
    pub seed: u64,
    pub library_version: String,
    pub wall_time_seconds: f64,
    /// Replications per cell, for simulation runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_rep: Option<usize>,
    /// Drop counters by stage (individuals, replicates, ...).
    pub drop_counts: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(config_hash: u64, seed: u64) -> Self {
        let command = std::env::args().collect::<Vec<_>>().join(" ");
        Self {
            command,
            config_hash: format!("{config_hash:016x}"),
            seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: 0.0,
            m_rep: None,
            drop_counts: BTreeMap::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), AppError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| AppError::Input(format!("manifest: {e}")))?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

/// FNV-1a over arbitrary bytes, for input hashing.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
