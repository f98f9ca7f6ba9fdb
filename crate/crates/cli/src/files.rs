//! Data directory conventions: scene keys, kind-based discovery and the
//! generation manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scatspec::cube::CubeFile;

pub const EXT: &str = "hsc";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneEntry {
    pub key: String,
    pub seed: u64,
    pub hsi: FileEntry,
    pub msi: FileEntry,
    pub mask: FileEntry,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub scenes: Vec<SceneEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// File stem without a trailing `_hsi`, `_msi`, `_mask` or `_pred`.
pub fn scene_key(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in ["_hsi", "_msi", "_mask", "_pred"] {
        if let Some(k) = stem.strip_suffix(suffix) {
            return k.to_string();
        }
    }
    stem
}

/// Every cube file in `dir` whose header kind is `kind`, keyed by scene.
pub fn discover(dir: &Path, kind: &str) -> Result<BTreeMap<String, (PathBuf, CubeFile)>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(EXT) {
            continue;
        }
        let file = CubeFile::read(&path).with_context(|| format!("reading {}", path.display()))?;
        if file.header.metadata.kind != kind {
            continue;
        }
        let key = scene_key(&path);
        if let Some((prev, _)) = out.insert(key.clone(), (path.clone(), file)) {
            bail!(
                "{} and {} both hold the {kind} data of scene {key}",
                prev.display(),
                path.display()
            );
        }
    }
    Ok(out)
}
