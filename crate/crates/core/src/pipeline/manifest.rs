use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    /// Path relative to the dataset directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEntry {
    pub image_id: String,
    pub image: FileRef,
    pub mask: FileRef,
    pub ground_truth: Option<FileRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    /// Started but never finished; outputs are untrusted.
    Running,
    Complete,
    /// Completed, but an upstream stage has since produced different output.
    Stale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    /// Hash of the configuration and upstream outputs the stage consumed.
    pub fingerprint: String,
    /// Hash over `outputs`.
    pub digest: String,
    /// Run-relative path to sha256.
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub decisions: BTreeMap<String, String>,
    pub inputs: Vec<InputEntry>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Option<Self>> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m = serde_json::from_str(&text)
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        Ok(Some(m))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s.into_bytes()
    }

    /// Write through a temporary file and rename so readers never see a
    /// half-written manifest.
    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let tmp = run_dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        let dst = run_dir.join(MANIFEST_FILE);
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn is_complete(&self, stage: &str) -> bool {
        self.stages
            .get(stage)
            .is_some_and(|r| r.status == StageStatus::Complete)
    }
}

/// Digest of an output map, stable under key order.
pub fn outputs_digest(outputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in outputs {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Hash every file under `paths` (files or directories, run-relative).
pub fn hash_outputs(run_dir: &Path, paths: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for rel in paths {
        let full = run_dir.join(rel);
        if full.is_dir() {
            for file in walk(&full)? {
                let rel_path = file
                    .strip_prefix(run_dir)
                    .expect("under run dir")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(rel_path, sha256_file(&file)?);
            }
        } else if full.is_file() {
            out.insert(rel.to_string(), sha256_file(&full)?);
        }
    }
    Ok(out)
}

fn walk(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Check recorded hashes against the files on disk.
pub fn verify_outputs(run_dir: &Path, record: &StageRecord) -> bool {
    record
        .outputs
        .iter()
        .all(|(rel, hash)| sha256_file(&run_dir.join(rel)).is_ok_and(|h| &h == hash))
}
