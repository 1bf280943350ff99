use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{atomic_write, read_file, sha256_hex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&read_file(path)?),
        })
    }
}

/// Everything needed to rerun a command: its arguments, resolved
/// configuration, seed and input digests, plus output digests and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub elapsed_seconds: f64,
    pub summary: serde_json::Value,
}

/// Collects a [`RunManifest`] while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl RunManifest {
    pub fn start(command: &str, args: Vec<String>) -> ManifestBuilder {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis());
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                args,
                config: serde_json::Value::Null,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix_ms: started,
                elapsed_seconds: 0.0,
                summary: serde_json::Value::Null,
            },
            clock: Instant::now(),
        }
    }

    /// `<out>.manifest.json`.
    pub fn path_for(out: &Path) -> PathBuf {
        let mut name = out.as_os_str().to_os_string();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

impl ManifestBuilder {
    pub fn config(&mut self, config: &impl Serialize) -> &mut Self {
        self.manifest.config = serde_json::to_value(config).expect("config serializes");
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(self)
    }

    pub fn summary(&mut self, summary: &impl Serialize) -> &mut Self {
        self.manifest.summary = serde_json::to_value(summary).expect("summary serializes");
        self
    }

    /// Stamps the elapsed time and writes the manifest beside `out`.
    pub fn finish(&mut self, out: &Path) -> Result<RunManifest> {
        self.manifest.elapsed_seconds = self.clock.elapsed().as_secs_f64();
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        atomic_write(&RunManifest::path_for(out), text.as_bytes())?;
        Ok(self.manifest.clone())
    }
}
