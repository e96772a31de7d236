//! The manifest written next to every run's outputs: the effective
//! configuration, content hashes of inputs and outputs, and the tool
//! version.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// SHA-256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn input_hashes(paths: &dimaq::InputPaths) -> Result<BTreeMap<String, String>> {
    [("monitors", &paths.monitors), ("cells", &paths.cells), ("hierarchy", &paths.hierarchy), ("adjacency", &paths.adjacency)]
        .into_iter()
        .map(|(role, p)| Ok((role.to_string(), sha256_file(p)?)))
        .collect()
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, inputs: BTreeMap<String, String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            inputs,
            outputs: BTreeMap::new(),
        }
    }

    /// Hashes the named files in `dir` and writes the manifest there.
    pub fn write(mut self, dir: &Path, outputs: &[&str]) -> Result<()> {
        for name in outputs {
            self.outputs.insert(name.to_string(), sha256_file(&dir.join(name))?);
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n").map_err(|e| CliError::io(&path, e))
    }
}
