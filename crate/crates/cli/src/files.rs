use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;
use vidpose::io::{FormatError, PipelineConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input.
    #[error("{0}")]
    Input(String),
    /// Valid input the pipeline could not process.
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }
}

pub fn at(path: &Path) -> impl Fn(FormatError) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::from_toml(&read_text(p)?).map_err(at(p)),
        None => Ok(PipelineConfig::default()),
    }
}

/// Files in `dir` named `<prefix><frame><suffix>`, keyed by frame.
pub fn numbered(dir: &Path, prefix: &str, suffix: &str) -> Result<BTreeMap<u32, PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Input(e.to_string()))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(frame) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)).and_then(|n| n.parse().ok()) {
            out.insert(frame, path);
        }
    }
    Ok(out)
}

pub fn numbered_name(prefix: &str, frame: u32, suffix: &str) -> String {
    format!("{prefix}{frame:05}{suffix}")
}

/// A single file keyed by its stem, or every `*.<ext>` file of a directory.
pub fn per_video(path: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).map(str::to_string);
    if path.is_file() {
        let name = stem(path).ok_or_else(|| CliError::Input(format!("{}: no file name", path.display())))?;
        return Ok(BTreeMap::from([(name, path.to_path_buf())]));
    }
    let entries = std::fs::read_dir(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::Input(e.to_string()))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            if let Some(name) = stem(&p) {
                out.insert(name, p);
            }
        }
    }
    Ok(out)
}
