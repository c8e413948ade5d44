//! Line-delimited dataset I/O with per-line validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::toyenv::MigrationEntry;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed writing {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One evaluation task: an API update, a scenario-framed problem, and
/// executable test programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub update_api_path: String,
    pub update_description: String,
    pub update_signature: String,
    pub update_docstring: String,
    pub scenario: String,
    pub problem: String,
    pub solution_signature: String,
    /// Self-contained test programs; the wire field is named `tests`.
    #[serde(rename = "tests")]
    pub test_programs: Vec<String>,
    /// Unknown fields preserved for round-trips.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn invalid(path: &Path, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::InvalidRecord {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_lines<T, F>(path: &Path, text: &str, validate: F) -> Result<Vec<T>, DatasetError>
where
    T: serde::de::DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: T =
            serde_json::from_str(raw).map_err(|e| invalid(path, line, e.to_string()))?;
        validate(&record).map_err(|msg| invalid(path, line, msg))?;
        out.push(record);
    }
    Ok(out)
}

fn validate_migration(entry: &MigrationEntry) -> Result<(), String> {
    for (name, value) in [
        ("dependency", &entry.dependency),
        ("target_version", &entry.target_version),
        ("update_info", &entry.update_info),
        ("old_code", &entry.old_code),
        ("target_code", &entry.target_code),
    ] {
        if value.is_empty() {
            return Err(format!("field '{name}' must be non-empty"));
        }
    }
    Ok(())
}

fn validate_eval(entry: &EvalEntry) -> Result<(), String> {
    if entry.solution_signature.is_empty() {
        return Err("field 'solution_signature' must be non-empty".into());
    }
    if entry.test_programs.is_empty() {
        return Err("field 'tests' must contain at least one test program".into());
    }
    Ok(())
}

/// Loads a migration dataset (fields `dependency`, `target_version`,
/// `update_info`, `old_code`, `target_code`; one JSON record per line).
pub fn load_migration_dataset(path: &Path) -> Result<Vec<MigrationEntry>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lines(path, &text, validate_migration)
}

pub fn save_migration_dataset(
    path: &Path,
    entries: &[MigrationEntry],
) -> Result<(), DatasetError> {
    fs::write(path, to_jsonl(entries)).map_err(|source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an evaluation dataset (see [`EvalEntry`] for the field names).
pub fn load_eval_dataset(path: &Path) -> Result<Vec<EvalEntry>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lines(path, &text, validate_eval)
}

pub fn save_eval_dataset(path: &Path, entries: &[EvalEntry]) -> Result<(), DatasetError> {
    fs::write(path, to_jsonl(entries)).map_err(|source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Serializes records to line-delimited JSON.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}
