//! Atomic file output and SHA-256 manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so a
/// failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().ok_or_else(|| {
        io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("not a file path: {}", path.display()),
        )
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Digest of every file written under one output directory, keyed by
/// relative path with `/` separators.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, String>,
}

/// Collects files for an output directory and writes them atomically,
/// recording each digest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            manifest: Manifest::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> io::Result<()> {
        let bytes = bytes.as_ref();
        let path = rel.split('/').fold(self.root.clone(), |p, seg| p.join(seg));
        write_atomic(&path, bytes)?;
        self.manifest.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(self) -> io::Result<Manifest> {
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        write_atomic(&self.root.join("manifest.json"), json.as_bytes())?;
        Ok(self.manifest)
    }
}
