//! Run manifests: every option, the seed and digests of all inputs, enough
//! to reproduce a run's outputs exactly.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::app::{to_json, write_file};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<O: Serialize> {
    pub format_version: u32,
    pub command: String,
    pub options: O,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl InputDigest {
    pub fn new(role: &str, path: &Path, contents: &str) -> Self {
        Self {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        }
    }
}

impl<O: Serialize> Manifest<O> {
    pub fn write(&self, dir: &Path) -> crate::Result<()> {
        write_file(dir, MANIFEST_FILE, &to_json(self)?)?;
        Ok(())
    }
}
