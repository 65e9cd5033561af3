use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One produced file: name relative to the output directory, and its bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    name: String,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    files: Vec<EntryFile>,
}

const ENTRY: &str = "entry.json";

/// Content-addressed store: one directory per key holding the artifacts and `entry.json`.
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: PathBuf) -> Self {
        Cache { root }
    }

    /// `HOLDERLAB_CACHE`, then the XDG cache directory, then `~/.cache`, then the system temp dir.
    pub fn default_root() -> PathBuf {
        if let Some(dir) = std::env::var_os("HOLDERLAB_CACHE").filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        if let Some(dir) = std::env::var_os("XDG_CACHE_HOME").filter(|v| !v.is_empty()) {
            return PathBuf::from(dir).join("holderlab");
        }
        if let Some(home) = std::env::var_os("HOME").filter(|v| !v.is_empty()) {
            return PathBuf::from(home).join(".cache").join("holderlab");
        }
        std::env::temp_dir().join("holderlab-cache")
    }

    pub fn entry_dir(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// Returns the stored artifacts, or `None` on a miss or a corrupt entry.
    pub fn load(&self, key: &str) -> Option<Vec<Artifact>> {
        let dir = self.entry_dir(key);
        if !dir.exists() {
            return None;
        }
        match read_entry(&dir, key) {
            Ok(a) => Some(a),
            Err(reason) => {
                log::warn!("corrupt cache entry {key} ({reason}); recomputing");
                None
            }
        }
    }

    pub fn store(&self, key: &str, artifacts: &[Artifact]) -> Result<(), CliError> {
        fs::create_dir_all(&self.root)?;
        let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(&self.root)?;
        let mut files = Vec::with_capacity(artifacts.len());
        for a in artifacts {
            fs::write(staging.path().join(&a.name), &a.bytes)?;
            files.push(EntryFile { name: a.name.clone(), sha256: sha256_hex(&a.bytes) });
        }
        let entry = serde_json::to_vec_pretty(&Entry { key: key.to_string(), files }).expect("serializable entry");
        fs::write(staging.path().join(ENTRY), entry)?;
        let dest = self.entry_dir(key);
        if dest.exists() {
            fs::remove_dir_all(&dest)?;
        }
        fs::rename(staging.keep(), &dest)?;
        Ok(())
    }

    /// Cached artifacts for `key`, running `producer` and storing its result on a miss.
    pub fn get_or_compute(
        &self,
        key: &str,
        producer: impl FnOnce() -> Result<Vec<Artifact>, CliError>,
    ) -> Result<Vec<Artifact>, CliError> {
        if let Some(hit) = self.load(key) {
            log::info!("cache hit {key}");
            return Ok(hit);
        }
        let fresh = producer()?;
        if let Err(e) = self.store(key, &fresh) {
            log::warn!("could not store cache entry {key}: {e}");
        }
        Ok(fresh)
    }
}

fn read_entry(dir: &Path, key: &str) -> Result<Vec<Artifact>, String> {
    let text = fs::read(dir.join(ENTRY)).map_err(|e| format!("{ENTRY}: {e}"))?;
    let entry: Entry = serde_json::from_slice(&text).map_err(|e| format!("{ENTRY}: {e}"))?;
    if entry.key != key {
        return Err(format!("entry records key {}", entry.key));
    }
    entry
        .files
        .into_iter()
        .map(|f| {
            let bytes = fs::read(dir.join(&f.name)).map_err(|e| format!("{}: {e}", f.name))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(format!("{}: checksum mismatch", f.name));
            }
            Ok(Artifact { name: f.name, bytes })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn art(name: &str, body: &str) -> Artifact {
        Artifact { name: name.into(), bytes: body.as_bytes().to_vec() }
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path().to_path_buf());
        assert!(cache.load("k").is_none());
        cache.store("k", &[art("a.csv", "x\n1\n")]).unwrap();
        assert_eq!(cache.load("k").unwrap(), vec![art("a.csv", "x\n1\n")]);
        fs::write(cache.entry_dir("k").join("a.csv"), "tampered").unwrap();
        assert!(cache.load("k").is_none());
        let mut calls = 0;
        let got = cache
            .get_or_compute("k", || {
                calls += 1;
                Ok(vec![art("a.csv", "x\n2\n")])
            })
            .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(got, cache.load("k").unwrap());
    }
}
