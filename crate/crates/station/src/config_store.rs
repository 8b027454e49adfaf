//! Console configuration files.
//!
//! A profile is one JSON document: object keys sorted, two-space indent,
//! trailing newline. Keys the console does not know are kept verbatim and
//! written back on save. An empty file is the default configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gcs_core::config::{ConfigError, ConsoleConfig};
use gcs_core::console::Persistence;
use gcs_core::wire::ErrorCode;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    pub fn code(&self) -> ErrorCode {
        match self {
            StoreError::Parse { .. } => ErrorCode::Config,
            StoreError::Invalid(e) => e.code(),
            StoreError::Io { .. } => ErrorCode::Io,
        }
    }
}

/// Canonical file text of a configuration.
pub fn to_text(config: &ConsoleConfig) -> String {
    let value = serde_json::to_value(config).expect("configuration is plain data");
    let mut text = serde_json::to_string_pretty(&value).expect("values always serialize");
    text.push('\n');
    text
}

/// Parses file text without checking cross-references.
pub fn parse(text: &str, origin: &str) -> Result<ConsoleConfig, StoreError> {
    if text.trim().is_empty() {
        return Ok(ConsoleConfig::default());
    }
    serde_json::from_str(text).map_err(|e| StoreError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates file text.
pub fn from_text(text: &str, origin: &str) -> Result<ConsoleConfig, StoreError> {
    let config = parse(text, origin)?;
    config.validate()?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<ConsoleConfig, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_text(&text, &path.display().to_string())
}

/// Validates and writes atomically: a temporary file in the same directory
/// is renamed over the target.
pub fn save(path: &Path, config: &ConsoleConfig) -> Result<(), StoreError> {
    config.validate()?;
    let io = |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(to_text(config).as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Storage backing `config/save` and `config/reload`.
#[derive(Debug, Clone)]
pub struct FileStore {
    pub path: PathBuf,
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl Persistence for FileStore {
    fn save(&mut self, config: &ConsoleConfig) -> Result<(), String> {
        save(&self.path, config).map_err(|e| e.to_string())
    }

    fn reload(&mut self) -> Result<ConsoleConfig, String> {
        load(&self.path).map_err(|e| e.to_string())
    }
}
