//! Run manifests: what was run, on which inputs, and what it wrote.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{EdmError, Result};

/// Written next to every command's outputs. Identical manifests mean
/// identical outputs, so nothing time- or host-dependent goes in here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub params: serde_json::Value,
    /// Input label (as given on the command line) to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, params: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            params: serde_json::to_value(params)
                .map_err(|e| EdmError::InvalidConfig(format!("unserializable parameters: {e}")))?,
            inputs: BTreeMap::new(),
            seed: None,
            outputs: Vec::new(),
        })
    }

    pub fn add_input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| EdmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
