use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `manifest.json` with exactly the keys `config_sha256, tool_version,
/// started_at, wall_seconds, subcommand`, in that order.
pub fn write_manifest(
    dir: &Path,
    config_bytes: &[u8],
    subcommand: &str,
    started_at: DateTime<Utc>,
    wall_seconds: f64,
) -> Result<PathBuf> {
    let doc = json!({
        "config_sha256": sha256_hex(config_bytes),
        "tool_version": TOOL_VERSION,
        "started_at": started_at.to_rfc3339_opts(SecondsFormat::Millis, true),
        "wall_seconds": wall_seconds,
        "subcommand": subcommand,
    });
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
    Ok(path)
}
