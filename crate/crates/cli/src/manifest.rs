use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one invocation: enough to replay it and to check that the replay produced
/// the same files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub version: String,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub config: BTreeMap<String, Value>,
    /// The run seed and the per-stage seeds derived from it.
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
    pub exit_code: i32,
}

/// Collects the manifest while a command runs and owns the output directory.
pub struct Run {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

impl Run {
    pub fn new(subcommand: &str, out_dir: &Path, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let mut seeds = BTreeMap::new();
        seeds.insert("run".to_string(), seed);
        Ok(Run {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                argv: std::env::args().collect(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: BTreeMap::new(),
                config: BTreeMap::new(),
                seeds,
                outputs: Vec::new(),
                timings: Vec::new(),
                exit_code: 0,
            },
        })
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("config serializes");
        self.manifest.config.insert(key.to_string(), v);
    }

    pub fn seed(&mut self, stage: &str, seed: u64) {
        self.manifest.seeds.insert(stage.to_string(), seed);
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.record_time(stage, t.elapsed().as_secs_f64());
        out
    }

    pub fn record_time(&mut self, stage: &str, seconds: f64) {
        self.manifest.timings.push((stage.to_string(), seconds));
    }

    /// Resolves `name` against the output directory unless it is absolute.
    pub fn path(&self, name: &Path) -> PathBuf {
        if name.is_absolute() {
            name.to_path_buf()
        } else {
            self.out_dir.join(name)
        }
    }

    pub fn write(&mut self, name: impl AsRef<Path>, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name.as_ref());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        let shown = path.strip_prefix(&self.out_dir).unwrap_or(&path).display().to_string();
        self.manifest.outputs.push(OutputFile {
            path: shown,
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
        Ok(path)
    }

    /// Writes `manifest.json` with the final exit code.
    pub fn finish(mut self, exit_code: i32) -> Result<(), CliError> {
        self.manifest.exit_code = exit_code;
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = self.out_dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}
