use std::collections::BTreeMap;
use std::path::Path;

use phasezoo::zoo::io::{read_json, write_json};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const PROVENANCE_FILE: &str = "provenance.json";

/// What one command ran with. Contains no timestamps, so identical reruns
/// write identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub config: serde_json::Value,
    /// Input file name → SHA-256 of its bytes when the command started.
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure {
        code: crate::failure::EXIT_ERROR,
        message: format!("cannot hash {}: {e}", path.display()),
        cells: Vec::new(),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records `prov` under `command` in `<root>/provenance.json`, keeping the
/// entries of other commands.
pub fn record(root: &Path, command: &str, prov: Provenance) -> Result<(), Failure> {
    let path = root.join(PROVENANCE_FILE);
    let mut all: BTreeMap<String, Provenance> = if path.exists() {
        read_json(&path).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    all.insert(command.to_string(), prov);
    write_json(&path, &all)?;
    Ok(())
}
