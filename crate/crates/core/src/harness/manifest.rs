use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_SCHEMA: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of the canonical text of a resolved configuration.
pub fn config_hash(canonical: &str) -> String {
    sha256_hex(canonical.as_bytes())
}

/// Record of one command invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_schema: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub config_path: Option<String>,
    pub config_hash: String,
    /// The resolved settings the hash was taken over.
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: Option<u64>,
        config_path: Option<&Path>,
        config: serde_json::Value,
    ) -> Self {
        let canonical = config.to_string();
        let versions = [
            (
                env!("CARGO_PKG_NAME"),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
            ("manifest_schema", MANIFEST_SCHEMA.to_string()),
            ("model_schema", crate::nn::SCHEMA_VERSION.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            manifest_schema: MANIFEST_SCHEMA,
            command: command.to_string(),
            seed,
            config_path: config_path.map(|p| p.display().to_string()),
            config_hash: config_hash(&canonical),
            config,
            versions,
            outputs: BTreeMap::new(),
        }
    }

    /// Hashes an output file already written to `dir`.
    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let bytes = std::fs::read(dir.join(name))?;
        self.outputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
