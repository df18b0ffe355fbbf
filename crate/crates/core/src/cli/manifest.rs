use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{invalid, CliError};
use crate::artifact::{sha256_file, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    fn of(path: &Path) -> Result<Self, CliError> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_file(path).map_err(invalid)? })
    }
}

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    /// Output paths are relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: Vec::new(),
            parameters: serde_json::Value::Null,
            seed: None,
            outputs: Vec::new(),
            duration_seconds: 0.0,
        }
    }

    pub fn add_inputs(&mut self, paths: &[&PathBuf]) -> Result<(), CliError> {
        for p in paths {
            self.inputs.push(FileDigest::of(p)?);
        }
        Ok(())
    }

    pub fn add_outputs(&mut self, paths: &[&PathBuf]) -> Result<(), CliError> {
        for p in paths {
            let mut d = FileDigest::of(p)?;
            if let Some(name) = p.file_name() {
                d.path = PathBuf::from(name);
            }
            self.outputs.push(d);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(invalid)?;
        s.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), s.as_bytes()).map_err(invalid)
    }

    /// Re-hashes the outputs found next to the manifest.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for o in &self.outputs {
            let path = dir.join(&o.path);
            let found = sha256_file(&path).map_err(invalid)?;
            if found != o.sha256 {
                return Err(invalid(format!("{} changed since the run (sha256 {found})", path.display())));
            }
        }
        Ok(())
    }
}
