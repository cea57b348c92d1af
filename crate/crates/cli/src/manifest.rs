//! Run manifests: config echo, input hashes, timestamps and an output
//! inventory whose hashes are taken from the files as written.

use std::fs;
use std::path::{Path, PathBuf};

use cortiplan_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<FileEntry>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn entry(path: &Path, shown: String) -> Result<FileEntry> {
    let (sha256, bytes) = sha256_file(path)?;
    Ok(FileEntry { path: shown, sha256, bytes })
}

/// Hash a file, or every regular file directly inside a directory.
pub fn hash_inputs(path: &Path) -> Result<Vec<FileEntry>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files.iter().map(|f| entry(f, f.display().to_string())).collect()
    } else {
        Ok(vec![entry(path, path.display().to_string())?])
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn begin(command: &str, config: Vec<(String, String)>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: Vec::new(),
            started: now(),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Record outputs relative to `root`, hash them and write
    /// `root/manifest.json`.
    pub fn finish(mut self, root: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
        let mut files = outputs.to_vec();
        files.sort();
        files.dedup();
        self.outputs = files
            .iter()
            .map(|f| {
                let shown = f.strip_prefix(root).unwrap_or(f).display().to_string();
                entry(f, shown)
            })
            .collect::<Result<_>>()?;
        self.finished = now();
        let path = root.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_hashes_match_files() {
        let dir = std::env::temp_dir().join(format!("cortiplan-manifest-{}", std::process::id()));
        fs::create_dir_all(dir.join("sub")).unwrap();
        let a = dir.join("sub/a.txt");
        fs::write(&a, "abc").unwrap();
        let m = RunManifest::begin("test", vec![("k".into(), "v".into())]);
        let path = m.finish(&dir, &[a.clone(), a.clone()]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        let outs = v["outputs"].as_array().unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0]["path"], "sub/a.txt");
        assert_eq!(outs[0]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        fs::remove_dir_all(dir).unwrap();
    }
}
