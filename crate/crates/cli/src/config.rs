//! TOML experiment configuration and its content hash.

use std::path::Path;

use herald_core::ExperimentConfig;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Label recorded in manifests when no config file was given.
pub const BUILTIN: &str = "(built-in defaults)";

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// SHA-256 of the bytes the config was parsed from.
    pub hash: String,
    pub path: String,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn render_config(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("config has no non-string map keys")
}

/// Reads and validates `path`, or falls back to the defaults rendered as TOML.
pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            let text =
                String::from_utf8(bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", p.display())))?;
            Ok(LoadedConfig {
                config: parse_config(&text)?,
                hash: content_hash(text.as_bytes()),
                path: p.display().to_string(),
            })
        }
        None => {
            let config = ExperimentConfig::default();
            let text = render_config(&config);
            Ok(LoadedConfig { config, hash: content_hash(text.as_bytes()), path: BUILTIN.to_string() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = render_config(&ExperimentConfig::default());
        assert_eq!(parse_config(&text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("seed = 3\nsede = 4\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = parse_config("[cr]\nthreshold_c = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c = parse_config("seed = 9\n[emission_a]\neta = 0.01\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.emission_a.eta, 0.01);
        assert_eq!(c.emission_b, ExperimentConfig::default().emission_b);
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(matches!(parse_config("[detectors]\nafterpulse_prob = 1.5\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(content_hash(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
