use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::cache::{sha256_hex, Artifact};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run; no timestamps, so reruns give identical bytes.
#[derive(Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub command: String,
    pub key: String,
    pub seed: u64,
    pub mode: String,
    pub system: Value,
    pub params: Value,
    pub files: Vec<ManifestFile>,
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// Writes every artifact, then the manifest listing them.
pub fn write_outputs(dir: &Path, artifacts: &[Artifact], mut manifest: Manifest) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    manifest.files = artifacts
        .iter()
        .map(|a| ManifestFile { name: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() })
        .collect();
    for a in artifacts {
        write_atomic(dir, &a.name, &a.bytes)?;
    }
    let mut json = serde_json::to_vec_pretty(&manifest).expect("serializable manifest");
    json.push(b'\n');
    write_atomic(dir, MANIFEST, &json)
}
