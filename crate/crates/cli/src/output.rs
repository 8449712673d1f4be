//! Output directories with a manifest and cleanup on failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads an input file, remembering its digest for the manifest.
pub fn read_input(path: &Path, inputs: &mut BTreeMap<String, String>) -> Result<Vec<u8>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    inputs.insert(path.display().to_string(), sha256_hex(&bytes));
    Ok(bytes)
}

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Effective settings after config-file merging and defaults.
    pub settings: Value,
    /// sha256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of every deterministic output file.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock timing files, excluded from digests.
    pub timing_outputs: Vec<String>,
    pub summary: Value,
}

/// Files written by one command. Dropping it without [`OutputDir::commit`]
/// removes them again, and the directory too if this run created it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    outputs: BTreeMap<String, String>,
    timing: Vec<String>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        let existed = root.is_dir();
        fs::create_dir_all(root)
            .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root: !existed,
            written: Vec::new(),
            outputs: BTreeMap::new(),
            timing: Vec::new(),
            committed: false,
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.put(name, bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_timing(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.put(name, bytes)?;
        self.timing.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` and keeps the outputs.
    pub fn commit(
        mut self,
        command: &'static str,
        settings: Value,
        inputs: BTreeMap<String, String>,
        summary: Value,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: "pocdetect",
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings,
            inputs,
            outputs: std::mem::take(&mut self.outputs),
            timing_outputs: std::mem::take(&mut self.timing),
            summary,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.put("manifest.json", text.as_bytes())?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
