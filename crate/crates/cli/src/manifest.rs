use std::path::{Path, PathBuf};

use griffith_core::grid::GridDescriptor;
use griffith_core::io::{write_atomic, write_json, IoError};
use serde::{Deserialize, Serialize};

use crate::ErrorRecord;

pub const MANIFEST: &str = "manifest.json";

/// Record of one run, written when it ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    /// `ok` or `error`.
    pub status: String,
    /// The effective configuration as TOML; parses back to the same config.
    pub config: String,
    pub grid: Option<GridDescriptor>,
    pub summary: serde_json::Value,
    pub error: Option<ErrorRecord>,
    /// Manifest of the sweep this run belongs to.
    pub parent: Option<PathBuf>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        write_atomic(&dir.join("config.toml"), self.config.as_bytes())?;
        write_json(&dir.join(MANIFEST), self)
    }
}
