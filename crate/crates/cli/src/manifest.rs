//! Output bookkeeping: atomic writes into the run directory and the
//! `manifest.txt` that records how the outputs were produced.
//!
//! The manifest is flat `key=value` text. Flag settings come first under
//! their flag names, so the file can be passed back through `--config` to
//! replay the run; bookkeeping keys carry a `run.`, `input.` or `output.`
//! prefix and are skipped on replay.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct RunManifest {
    command: &'static str,
    dir: PathBuf,
    config: Vec<(String, String)>,
    seed: u64,
    resolved: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &'static str, config: Vec<(String, String)>, seed: u64, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            command,
            dir: dir.to_path_buf(),
            config,
            seed,
            resolved: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Records a value that was derived rather than given, e.g. a default
    /// that depends on other settings.
    pub fn resolved(&mut self, key: &str, value: impl ToString) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Atomically writes `name` into the run directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        ksae_core::format::write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# ksae run manifest\n");
        for (k, v) in &self.config {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str(&format!("run.command={}\n", self.command));
        s.push_str(&format!("run.seed={}\n", self.seed));
        for (k, v) in &self.resolved {
            s.push_str(&format!("run.{k}={v}\n"));
        }
        for (p, d) in &self.inputs {
            s.push_str(&format!("input.{p}=sha256:{d}\n"));
        }
        for (p, d) in &self.outputs {
            s.push_str(&format!("output.{p}=sha256:{d}\n"));
        }
        s.push_str(&format!("run.duration_secs={:.3}\n", self.started.elapsed().as_secs_f64()));
        s
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path(MANIFEST_NAME);
        ksae_core::format::write_atomic(&path, self.to_text().as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
