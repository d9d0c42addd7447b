//! Provenance block written into every output file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to regenerate an output: no timestamps, no host data.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<InputFile>,
    pub flags: serde_json::Value,
    pub seeds: Vec<u64>,
    pub tolerances: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &'static str, flags: &impl Serialize) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            flags: serde_json::to_value(flags).expect("flags serialize"),
            seeds: Vec::new(),
            tolerances: serde_json::Value::Null,
        }
    }

    /// Reads an input file, recording its digest.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
        });
        Ok(text)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serializes")
    }

    /// One comment line for CSV and edge-list outputs.
    pub fn comment(&self) -> String {
        format!("# manifest: {}\n", serde_json::to_string(self).expect("manifest serializes"))
    }
}

/// Writes `text` to `path`, or to stdout without one.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A JSON document with the manifest under a top-level `manifest` key.
pub fn with_manifest(manifest: &RunManifest, mut body: serde_json::Map<String, serde_json::Value>) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("manifest".into(), manifest.to_value());
    doc.append(&mut body);
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("json serializes");
    s.push('\n');
    s
}
