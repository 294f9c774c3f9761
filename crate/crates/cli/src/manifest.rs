use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use hmrl::metaloop::RunConfig;

/// `manifest.json` of a run directory. Written when the run starts and
/// rewritten when it ends; artifact paths are relative to the directory.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    /// `running`, `completed` or `failed`.
    pub status: String,
    pub method: String,
    pub seed: u64,
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub checkpoints: Vec<String>,
    pub metrics: Option<String>,
    pub extra: Vec<String>,
    pub version: String,
    pub error: Option<String>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl Manifest {
    pub fn start(command: &str, cfg: &RunConfig) -> Self {
        Manifest {
            command: command.into(),
            status: "running".into(),
            method: cfg.method().name().into(),
            seed: cfg.run.seed,
            config: cfg.to_toml(),
            started_unix: now(),
            finished_unix: None,
            checkpoints: Vec::new(),
            metrics: None,
            extra: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            error: None,
        }
    }

    /// Replaces `manifest.json` through a temporary file.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&tmp, text)?;
        fs::rename(tmp, dir.join("manifest.json"))
    }

    pub fn finish(&mut self, dir: &Path) -> std::io::Result<()> {
        self.status = "completed".into();
        self.finished_unix = Some(now());
        self.write(dir)
    }

    pub fn fail(&mut self, dir: &Path, error: &str) -> std::io::Result<()> {
        self.status = "failed".into();
        self.finished_unix = Some(now());
        self.error = Some(error.into());
        self.write(dir)
    }
}
