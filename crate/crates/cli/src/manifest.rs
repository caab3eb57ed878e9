//! Per-run provenance record written as JSON.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub threads: usize,
    /// Fully resolved settings; feeding this file back via `--config`
    /// reproduces the run.
    pub config: serde_json::Value,
    /// Input path to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Probe(probe_core::ProbeError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Collects inputs and outputs while a command runs.
pub struct ManifestBuilder {
    command: String,
    threads: usize,
    started_at: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: &str, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            threads,
            started_at: now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish<C: Serialize>(self, config: &C, seed: Option<u64>, path: &Path) -> CliResult<RunManifest> {
        let config = serde_json::to_value(config).map_err(|e| usage(format!("unserializable config: {e}")))?;
        let m = RunManifest {
            tool_version: probe_core::TOOL_VERSION.to_string(),
            command: self.command,
            seed,
            threads: self.threads,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            started_at: self.started_at,
            finished_at: now(),
        };
        let body = serde_json::to_string_pretty(&m).expect("manifest serializes");
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        std::fs::write(path, body + "\n").map_err(|e| io_err(path, e))?;
        Ok(m)
    }
}

/// `out.ext` → `out.manifest.json`; directories get `manifest.json` inside.
pub fn default_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        out.with_extension("manifest.json")
    }
}
