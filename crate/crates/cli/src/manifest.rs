//! Machine-readable run metadata. Every command that produces files writes
//! a manifest alongside them: which command ran, the fully resolved
//! configuration (after flag/config-file/default layering), the input and
//! output paths, the seed if one was involved, and how long it took.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: BTreeMap<String, PathBuf>,
    outputs: BTreeMap<String, PathBuf>,
    wall_clock_secs: f64,
}

/// Collects manifest fields while a command runs; `write` stamps the wall
/// clock and serializes.
pub struct Manifest {
    started: Instant,
    inner: RunManifest,
}

impl Manifest {
    pub fn start(command: &str) -> Self {
        Manifest {
            started: Instant::now(),
            inner: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: None,
                config: serde_json::Value::Null,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                wall_clock_secs: 0.0,
            },
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.inner.seed = Some(seed);
        self
    }

    pub fn config(&mut self, config: serde_json::Value) -> &mut Self {
        self.inner.config = config;
        self
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inner.inputs.insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inner.outputs.insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn write(mut self, path: &Path) -> anyhow::Result<()> {
        self.inner.wall_clock_secs = self.started.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&self.inner)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// Conventional manifest location for a command whose primary output is a
/// single file: `<file>.manifest.json` next to it.
pub fn sibling(output: &Path) -> PathBuf {
    let mut name =
        output.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    name.push_str(".manifest.json");
    output.with_file_name(name)
}
