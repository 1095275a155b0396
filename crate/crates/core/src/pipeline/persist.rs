//! Run directories: `predictions.jsonl`, `report.json` and a `manifest.json`
//! holding the SHA-256 of each.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::sha256_hex;
use super::report::{PredictionRow, RunReport};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("nothing to persist")]
    NothingToPersist,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("digest mismatch for {path}: manifest has {expected}, file has {actual}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("{path} is not listed in {manifest}")]
    Unlisted { path: PathBuf, manifest: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub records: usize,
    /// File name to SHA-256.
    pub files: BTreeMap<String, String>,
}

/// Serializes rows one JSON object per line, in the given order.
pub fn predictions_jsonl(rows: &[PredictionRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("prediction rows serialize"));
        out.push('\n');
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<String, PersistError> {
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(sha256_hex(bytes))
}

/// Writes the three run files into `dir`, creating it if needed.
pub fn persist_run(report: &RunReport, rows: &[PredictionRow], dir: impl AsRef<Path>) -> Result<Manifest, PersistError> {
    if rows.is_empty() {
        return Err(PersistError::NothingToPersist);
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = BTreeMap::new();
    files.insert(
        PREDICTIONS_FILE.to_string(),
        write(&dir.join(PREDICTIONS_FILE), predictions_jsonl(rows).as_bytes())?,
    );
    let report_json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    files.insert(REPORT_FILE.to_string(), write(&dir.join(REPORT_FILE), report_json.as_bytes())?);
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        records: rows.len(),
        files,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&dir.join(MANIFEST_FILE), manifest_json.as_bytes())?;
    tracing::info!(dir = %dir.display(), records = rows.len(), "run persisted");
    Ok(manifest)
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<PredictionRow>, PersistError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PersistError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn read_manifest(path: &Path) -> Result<Manifest, PersistError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PersistError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Reads a file, checking it against the manifest next to it when present.
fn read_checked(path: &Path) -> Result<String, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let manifest_path = path.with_file_name(MANIFEST_FILE);
    if manifest_path.exists() {
        let manifest = read_manifest(&manifest_path)?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let expected = manifest.files.get(name).ok_or_else(|| PersistError::Unlisted {
            path: path.to_path_buf(),
            manifest: manifest_path.clone(),
        })?;
        let actual = sha256_hex(&bytes);
        if *expected != actual {
            return Err(PersistError::DigestMismatch {
                path: path.to_path_buf(),
                expected: expected.clone(),
                actual,
            });
        }
    }
    String::from_utf8(bytes).map_err(|e| PersistError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

/// Accepts either a run directory or a predictions file.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>, PersistError> {
    let path = path.as_ref();
    let file = if path.is_dir() { path.join(PREDICTIONS_FILE) } else { path.to_path_buf() };
    let text = read_checked(&file)?;
    parse_predictions(&text, &file)
}

/// Accepts either a run directory or a report file.
pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport, PersistError> {
    let path = path.as_ref();
    let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let text = read_checked(&file)?;
    serde_json::from_str(&text).map_err(|e| PersistError::Parse {
        path: file,
        line: e.line(),
        message: e.to_string(),
    })
}
