use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Parameters of one invocation, written before any other output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Config file of the run, or the event log an analysis read.
    pub config_path: String,
    pub config_hash: String,
    pub seed: u64,
    pub out_dir: String,
    pub params: ManifestParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtau_max_ns: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    pub oracle: bool,
    pub clicks: bool,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config_path: String,
        config_hash: String,
        seed: u64,
        out: &Path,
        params: ManifestParams,
    ) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_path,
            config_hash,
            seed,
            out_dir: out.display().to_string(),
            params,
        }
    }

    /// Creates `out` if needed and writes the manifest into it.
    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let path = out.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
