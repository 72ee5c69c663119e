use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::Serialize;

/// Provenance record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub config_digest: Option<String>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: &'static str,
    pub wall_clock_s: f64,
    /// Effective configuration after command-line overrides.
    pub effective_config: Option<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_path: None,
            config_digest: None,
            seed: None,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_clock_s: 0.0,
            effective_config: None,
        }
    }

    pub fn finish(mut self, elapsed: Duration, path: &Path) -> anyhow::Result<()> {
        self.wall_clock_s = elapsed.as_secs_f64();
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// `<output>.manifest.json` beside a file output.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
