//! Strict JSON configuration loading.

use std::fs;
use std::path::{Path, PathBuf};

use zebrasim_core::{SimSpec, Violation};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} is invalid:{}", list(.violations))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("\n  - {x}")).collect()
}

/// Parses a config without validating it.
pub fn parse_config(text: &str) -> Result<SimSpec, serde_json::Error> {
    serde_json::from_str(text)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimSpec, LoadError> {
    let spec = load_unvalidated(&path)?;
    let violations = spec.validate();
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(LoadError::Invalid {
            path: path.as_ref().to_path_buf(),
            violations,
        })
    }
}

/// Reads and parses without validation, for `validate` to report on.
pub fn load_unvalidated(path: impl AsRef<Path>) -> Result<SimSpec, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|source| LoadError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_config(spec: &SimSpec, path: impl AsRef<Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(spec).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")
}
