use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one command invocation, written next to its outputs.
///
/// `digest` covers every field except `timestamp`, so identical reruns
/// produce identical digests.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub model_order: Vec<Value>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            model_order: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn body(&self) -> Value {
        json!({
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "model_order": self.model_order,
            "outputs": self.outputs,
            "tool_version": TOOL_VERSION,
        })
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.body().to_string().as_bytes())
    }

    pub fn to_json(&self, timestamp: &str) -> String {
        let mut doc = self.body();
        let map = doc.as_object_mut().expect("manifest body is an object");
        map.insert("digest".into(), Value::String(self.digest()));
        map.insert("timestamp".into(), Value::String(timestamp.to_string()));
        let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        fs::write(path, self.to_json(&now)).with_context(|| format!("writing {}", path.display()))
    }
}

/// `out.jsonl` -> `out.jsonl.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_timestamp() {
        let m = RunManifest::new("fuse", json!({"t_count": 2}));
        let a: Value = serde_json::from_str(&m.to_json("2020-01-01T00:00:00Z")).unwrap();
        let b: Value = serde_json::from_str(&m.to_json("2030-01-01T00:00:00Z")).unwrap();
        assert_eq!(a["digest"], b["digest"]);
        assert_ne!(a["timestamp"], b["timestamp"]);
        let other = RunManifest::new("fuse", json!({"t_count": 3}));
        assert_ne!(m.digest(), other.digest());
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("/tmp/x/fused.jsonl")),
            PathBuf::from("/tmp/x/fused.jsonl.manifest.json")
        );
    }
}
