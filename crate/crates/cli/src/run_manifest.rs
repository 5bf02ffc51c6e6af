use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use somnoscore::fsutil;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

pub struct RunRecorder {
    command: &'static str,
    started: Instant,
    seed: Option<u64>,
    config: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunRecorder {
    pub fn start(command: &'static str, seed: Option<u64>, config: Value) -> Self {
        RunRecorder {
            command,
            started: Instant::now(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(self, path: &Path) -> somnoscore::Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        fsutil::write_json(path, &manifest)
    }
}
