//! Artifact bookkeeping for one CLI invocation. Every file written is
//! tracked, and a run dropped before [`Run::finish`] removes its partial
//! outputs. A finished run records a manifest that is enough to replay it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ConfigFile;

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    /// Arguments after the program name, config entries already merged in.
    args: &'a [String],
    config_file: Option<String>,
    config: BTreeMap<String, Vec<String>>,
    seed: Option<u64>,
    version: &'static str,
    outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Run {
    command: String,
    args: Vec<String>,
    config: Option<ConfigFile>,
    pub seed: Option<u64>,
    manifest: Option<PathBuf>,
    created_dirs: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str, args: Vec<String>, config: Option<ConfigFile>) -> Self {
        Run {
            command: command.to_string(),
            args,
            config,
            seed: None,
            manifest: None,
            created_dirs: Vec::new(),
            written: Vec::new(),
        }
    }

    /// Create `dir` if needed and place the manifest inside it.
    pub fn output_dir(&mut self, dir: &Path) -> Result<()> {
        self.ensure_dir(dir)?;
        self.manifest = Some(dir.join("manifest.json"));
        Ok(())
    }

    /// Single-file commands keep the manifest beside the file.
    pub fn output_file(&mut self, file: &Path) -> Result<()> {
        if let Some(parent) = file.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.ensure_dir(parent)?;
        }
        let mut name = file.as_os_str().to_owned();
        name.push(".manifest.json");
        self.manifest = Some(PathBuf::from(name));
        Ok(())
    }

    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur.filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.created_dirs.extend(missing);
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        // Track before writing so a half-written file is removed too.
        self.written.push(path.to_path_buf());
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(path, s.as_bytes())
    }

    /// Write the manifest. Commands with no output location write none.
    pub fn finish(mut self) -> Result<()> {
        let Some(manifest) = self.manifest.clone() else {
            return Ok(());
        };
        let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut outputs = Vec::with_capacity(self.written.len());
        for p in &self.written {
            let bytes = std::fs::read(p).with_context(|| format!("reading back {}", p.display()))?;
            let shown = p.strip_prefix(&base).unwrap_or(p);
            outputs.push(OutputEntry { path: shown.display().to_string(), sha256: sha256_hex(&bytes) });
        }
        let doc = Manifest {
            command: &self.command,
            args: &self.args,
            config_file: self.config.as_ref().map(|c| c.path.display().to_string()),
            config: self.config.as_ref().map(ConfigFile::echo).unwrap_or_default(),
            seed: self.seed,
            version: prognosis_core::VERSION,
            outputs,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        self.written.push(manifest.clone());
        std::fs::write(&manifest, s).with_context(|| format!("writing {}", manifest.display()))?;
        self.written.clear();
        self.created_dirs.clear();
        Ok(())
    }

    fn cleanup(&mut self) {
        for p in self.written.drain(..) {
            let _ = std::fs::remove_file(p);
        }
        for d in self.created_dirs.drain(..) {
            let _ = std::fs::remove_dir(d);
        }
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        self.cleanup();
    }
}
