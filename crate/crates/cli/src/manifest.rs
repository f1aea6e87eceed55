//! Per-stage manifest: input and output hashes, seeds, and versions.
//! Manifests carry no timestamps so a rerun with the same config produces
//! byte-identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub fold: Option<String>,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex_digest(&bytes))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub struct ManifestBuilder {
    manifest: Manifest,
    dir: PathBuf,
    /// Paths under this root are recorded relative to it, keeping manifests
    /// byte-identical across different output locations.
    root: PathBuf,
}

impl ManifestBuilder {
    pub fn new(
        stage: &str,
        dir: &Path,
        root: &Path,
        fold: Option<String>,
        config_sha256: String,
    ) -> Self {
        ManifestBuilder {
            manifest: Manifest {
                stage: stage.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                fold,
                config_sha256,
                ..Default::default()
            },
            dir: dir.to_path_buf(),
            root: root.to_path_buf(),
        }
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let key = self.key(path);
        self.manifest.inputs.insert(key, sha256_file(path)?);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        let key = self.key(path);
        self.manifest.outputs.insert(key, sha256_file(path)?);
        Ok(self)
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.manifest.seeds.insert(name.to_string(), value);
        self
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn manifest_is_deterministic() {
        let dir = TempDir::new().unwrap();
        let file = dir.path().join("artifact.txt");
        std::fs::write(&file, "payload").unwrap();

        let build = || {
            let mut b = ManifestBuilder::new(
                "train",
                dir.path(),
                dir.path(),
                Some("F4".into()),
                hex_digest(b"config"),
            );
            b.input(&file).unwrap();
            b.seed("train", 7);
            b.write().unwrap();
            std::fs::read(dir.path().join("manifest.json")).unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn hashes_are_stable() {
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
