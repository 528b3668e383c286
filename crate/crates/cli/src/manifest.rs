use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Record of one invocation, written as `<output>.manifest.json` beside
/// the output it describes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    /// Full argument vector, so the run can be repeated verbatim.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: u64,
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, jobs: usize) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv,
            config: serde_json::Value::Null,
            seed: None,
            jobs,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            timings: BTreeMap::new(),
        }
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "run".into());
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    /// Writes through a temporary file and a rename.
    pub fn write(&self, output: &Path) -> std::io::Result<PathBuf> {
        let path = Self::path_for(output);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
