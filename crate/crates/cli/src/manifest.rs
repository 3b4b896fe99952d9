use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use stereoscale::io::Config;
use stereoscale::{Error, Result};

pub const FILE_NAME: &str = "manifest.json";

/// Written next to every run's outputs. Holds no timestamps or absolute output paths,
/// so equal inputs give byte-identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            tool: "stereoscale",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed: config.seed,
            config: config
                .entries()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.outputs.sort();
        self.outputs.dedup();
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("manifest serialization: {e}")))?;
        text.push('\n');
        let path = dir.join(FILE_NAME);
        std::fs::write(&path, text).map_err(|source| Error::Io { path, source })
    }
}
