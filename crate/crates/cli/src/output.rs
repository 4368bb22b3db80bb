//! Errors, config files, artifact writing and run manifests.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, missing inputs, malformed files. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Anything that failed after the inputs checked out. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

/// Loads a JSON or TOML config file, chosen by extension.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    let bad = |e: String| invalid(format!("invalid config {}: {e}", path.display()));
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| bad(e.to_string())),
        _ => serde_json::from_str(&text).map_err(|e| bad(e.to_string())),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config: &'a Value,
    outputs: &'a [String],
}

/// Writes `<output>.manifest.json` next to each output.
pub fn write_manifests(command: &str, seed: Option<u64>, config: &impl Serialize, outputs: &[&Path]) -> Result<(), CliError> {
    let config = serde_json::to_value(config).expect("config serializes");
    let names: Vec<String> = outputs.iter().map(|p| p.display().to_string()).collect();
    let manifest = Manifest { tool: "mci", version: env!("CARGO_PKG_VERSION"), command, seed, config: &config, outputs: &names };
    let text = to_pretty(&manifest);
    for out in outputs {
        write_bytes(&manifest_path(out), text.as_bytes())?;
    }
    Ok(())
}
