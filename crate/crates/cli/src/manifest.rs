use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Flat;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written next to every set of artifacts. Its `config`
/// can be passed back as `--config manifest.json` to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Flat,
    pub inputs: BTreeMap<String, InputFile>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config: Flat) -> Self {
        let t = now();
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: t.clone(),
            finished_at: t,
            status: "running".to_string(),
            error: None,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.insert(
            role.to_string(),
            InputFile {
                path: path.to_path_buf(),
                sha256,
            },
        );
        Ok(())
    }

    /// Hashes the listed files in `dir`, then writes the manifest there.
    pub fn finish(mut self, dir: &Path, outputs: &[&str], error: Option<String>) -> CliResult<()> {
        for name in outputs {
            let p = dir.join(name);
            if p.exists() {
                self.outputs.insert(name.to_string(), sha256_file(&p)?);
            }
        }
        self.finished_at = now();
        self.status = if error.is_some() { "failed" } else { "ok" }.to_string();
        self.error = error;
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}
