//! Run manifests.

use std::path::Path;

use anyhow::Result;
use gems_core::io::write_atomic;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub versions: Versions,
    /// Fully resolved parameters, defaults included.
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub gems: &'static str,
    pub manifest: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            gems: env!("CARGO_PKG_VERSION"),
            manifest: 1,
        }
    }
}

pub fn write(dir: &Path, manifest: &Manifest<'_>) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(manifest)?;
    write_atomic(&dir.join("manifest.json"), &bytes)?;
    Ok(())
}
