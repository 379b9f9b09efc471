//! Stage outputs are assembled in memory, then committed to the output
//! directory together with one manifest. Nothing is written before every
//! input has been read and every computation has succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    /// Digest of the effective configuration; absent for stages without one.
    pub config_hash: Option<String>,
    /// Input path as given on the command line, to content digest.
    pub inputs: BTreeMap<String, String>,
    /// Path relative to the output directory, to content digest.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

/// Everything one stage reads and writes.
pub struct Stage {
    name: &'static str,
    started: Instant,
    config_hash: Option<String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<PathBuf, Vec<u8>>,
}

impl Stage {
    pub fn new(name: &'static str) -> Self {
        Self {
            name,
            started: Instant::now(),
            config_hash: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn config<C: Serialize>(&mut self, cfg: &C) {
        let bytes = serde_json::to_vec(cfg).expect("configs serialize");
        self.config_hash = Some(sha256_hex(&bytes));
    }

    /// Reads an input file and records its digest. A missing file is a usage
    /// error.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String, CliError> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| CliError::usage(format!("{}: not valid UTF-8", path.display())))
    }

    /// Queues an output at a path relative to the output directory.
    pub fn write(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        let rel = rel.into();
        assert!(rel.is_relative(), "output paths are relative");
        self.outputs.insert(rel, bytes.into());
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("outputs serialize");
        bytes.push(b'\n');
        self.write(rel, bytes);
    }

    fn manifest(&self) -> RunManifest {
        RunManifest {
            stage: self.name.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash.clone(),
            inputs: self.inputs.clone(),
            outputs: self
                .outputs
                .iter()
                .map(|(p, b)| (portable(p), sha256_hex(b)))
                .collect(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        }
    }

    /// Writes every queued output and the manifest under `dir`. Files are
    /// first written to a staging directory next to `dir`, then renamed into
    /// place.
    pub fn commit(self, dir: &Path) -> Result<RunManifest, CliError> {
        let manifest = self.manifest();
        let parent = match dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let leaf = dir
            .file_name()
            .ok_or_else(|| CliError::usage(format!("{}: not a directory name", dir.display())))?;
        std::fs::create_dir_all(&parent)
            .map_err(|e| CliError::usage(format!("{}: {e}", parent.display())))?;
        let staging = parent.join(format!(
            ".{}.staging-{}",
            leaf.to_string_lossy(),
            std::process::id()
        ));
        let result = stage_and_move(&staging, dir, &self.outputs, &manifest);
        let _ = std::fs::remove_dir_all(&staging);
        result.map(|()| manifest)
    }
}

fn portable(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn stage_and_move(
    staging: &Path,
    dir: &Path,
    outputs: &BTreeMap<PathBuf, Vec<u8>>,
    manifest: &RunManifest,
) -> Result<(), CliError> {
    fn io(p: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::usage(format!("{}: {e}", p.display()))
    }
    let _ = std::fs::remove_dir_all(staging);
    let mut manifest_bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    let all = outputs
        .iter()
        .map(|(p, b)| (p.as_path(), b.as_slice()))
        .chain(std::iter::once((Path::new(MANIFEST_FILE), manifest_bytes.as_slice())));
    for (rel, bytes) in all.clone() {
        let path = staging.join(rel);
        let parent = path.parent().expect("joined path has a parent");
        std::fs::create_dir_all(parent).map_err(io(parent))?;
        std::fs::write(&path, bytes).map_err(io(&path))?;
    }
    if !dir.exists() {
        return std::fs::rename(staging, dir).map_err(io(dir));
    }
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{}: exists and is not a directory", dir.display())));
    }
    for (rel, _) in all {
        let target = dir.join(rel);
        let parent = target.parent().expect("joined path has a parent");
        std::fs::create_dir_all(parent).map_err(io(parent))?;
        std::fs::rename(staging.join(rel), &target).map_err(io(&target))?;
    }
    Ok(())
}
