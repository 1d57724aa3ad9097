use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use eip_core::binio::atomic_write;
use eip_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<Stage>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(resolved_config),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: 0,
            stages: Vec::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Run `f` as a named stage and record its duration.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now();
        let path = out_dir.join("manifests").join(format!("{}.toml", self.command));
        atomic_write(&path, toml::to_string(&self).expect("manifest serializes").as_bytes())?;
        Ok(path)
    }
}
