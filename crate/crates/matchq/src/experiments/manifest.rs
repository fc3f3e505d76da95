use crate::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Provenance record written next to every emitted artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Crate version that produced the artifact.
    pub version: String,
    /// Sweep or command name.
    pub kind: String,
    pub seed: u64,
    /// FNV-1a hash of the canonical configuration string.
    pub config_hash: String,
    /// The canonical configuration string itself, so a run can be replayed.
    pub config: String,
    pub rows: usize,
}

pub fn fnv1a_hex(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

impl Manifest {
    pub fn new(kind: &str, seed: u64, config: String, rows: usize) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            seed,
            config_hash: fnv1a_hex(&config),
            config,
            rows,
        }
    }

    /// Write as pretty JSON to `<artifact>.manifest.json`.
    pub fn write_next_to(&self, artifact: &Path) -> Result<()> {
        let mut path = artifact.as_os_str().to_owned();
        path.push(".manifest.json");
        let mut f = std::fs::File::create(std::path::PathBuf::from(path))?;
        let text =
            serde_json::to_string_pretty(self).map_err(|e| crate::Error::Output(e.to_string()))?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
