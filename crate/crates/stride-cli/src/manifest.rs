//! Run manifests: every command records its configuration, seeds, input
//! hashes, output hashes, and wall-clock timings. Text artifacts embed the
//! manifest hash as a comment line; binary formats (whose layouts are fixed)
//! are referenced through their content hashes here.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stride_core::hash::Fnv1a64;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRef {
    pub path: String,
    pub fnv1a64: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    /// Identifies the run configuration: hash over command, config, seeds,
    /// input hashes, and tool version. Embedded in every text artifact.
    pub manifest_hash: String,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: BTreeMap::new(),
            seeds: Vec::new(),
            tool_version: TOOL_VERSION.to_string(),
            manifest_hash: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seeds.push(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let bytes = fs::read(path)?;
        self.inputs.push(ArtifactRef {
            path: path.display().to_string(),
            fnv1a64: format!("{:016x}", stride_core::hash::fnv1a64(&bytes)),
        });
        Ok(self)
    }

    /// Freeze the manifest hash over the stable fields. Call after all
    /// config/seeds/inputs are registered and before artifacts are written.
    pub fn seal(&mut self) -> String {
        let mut h = Fnv1a64::new();
        h.update(self.command.as_bytes());
        for (k, v) in &self.config {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b";");
        }
        for s in &self.seeds {
            h.update(&s.to_le_bytes());
        }
        for i in &self.inputs {
            h.update(i.fnv1a64.as_bytes());
        }
        h.update(self.tool_version.as_bytes());
        self.manifest_hash = format!("{:016x}", h.finish());
        self.manifest_hash.clone()
    }

    /// Register a written output artifact by hashing its content.
    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(path)?;
        self.outputs.push(ArtifactRef {
            path: path.display().to_string(),
            fnv1a64: format!("{:016x}", stride_core::hash::fnv1a64(&bytes)),
        });
        Ok(())
    }

    pub fn timing(&mut self, what: &str, ms: u128) {
        self.timings_ms.insert(what.to_string(), ms);
    }

    /// Write `manifest_<command>.json` into the output directory.
    pub fn write(&self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        let path = out_dir.join(format!("manifest_{}.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    /// The comment line text artifacts carry.
    pub fn preamble(&self) -> Vec<String> {
        vec![format!("manifest: {}", self.manifest_hash)]
    }
}
