//! Config resolution: defaults ← JSON config file ← command-line flags,
//! plus the canonical digest stamped into every output.

use crate::errors::{CliError, CliResult};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Hex SHA-256 of the canonical JSON serialization of a resolved config.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let hash = Sha256::digest(&json);
    hash.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

/// Parse a JSON config file with line/field diagnostics.
pub fn load_config_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!(
                    "{}: line {}, column {}: {e}",
                    p.display(),
                    e.line(),
                    e.column()
                ))
            })
        }
    }
}
