use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;

/// Record of one command invocation, written on success and on failure.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    /// Resolved settings after applying flags, config files and defaults.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub status: String,
    pub error: Option<String>,
}

/// What a command records about itself while it runs.
#[derive(Debug, Default)]
pub struct RunLog {
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Where the manifest goes unless `--manifest` overrides it.
    pub manifest_path: Option<PathBuf>,
}

impl RunLog {
    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Manifest next to a primary output file: `<file>.manifest.json`.
    pub fn manifest_beside(&mut self, file: &Path) {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.manifest_path = Some(file.with_file_name(name));
    }

    /// Manifest inside a primary output directory.
    pub fn manifest_in(&mut self, dir: &Path) {
        self.manifest_path = Some(dir.join("run_manifest.json"));
    }
}

impl RunManifest {
    pub fn start(command: &str, argv: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv,
            config: Value::Null,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: Utc::now(),
            finished_at: None,
            status: "running".into(),
            error: None,
        }
    }

    pub fn finish(&mut self, log: RunLog, result: &anyhow::Result<()>) {
        self.config = log.config;
        self.seeds = log.seeds;
        self.inputs = log.inputs;
        self.outputs = log.outputs;
        self.finished_at = Some(Utc::now());
        match result {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "error".into();
                self.error = Some(format!("{e:#}"));
            }
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
