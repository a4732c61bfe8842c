//! Run directories, content hashing and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// The persisted configuration of one run: flags plus the dataset digest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub tool_version: String,
    pub data_sha256: Option<String>,
    #[serde(flatten)]
    pub config: Value,
}

impl RunConfig {
    pub fn new<T: Serialize>(command: &str, config: &T, data_sha256: Option<String>) -> Self {
        RunConfig {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            data_sha256,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }

    /// First 12 hex digits of the SHA-256 of the canonical (key-sorted) JSON.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_string(&serde_json::to_value(self).expect("serializes")).expect("serializes");
        sha256_hex(canonical.as_bytes())[..12].to_string()
    }
}

/// Writes land in a temporary file in the target directory and are renamed
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Analysis(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Analysis(format!("csv: {e}")))
}

/// Collects the files of one run and writes `index.json` last.
pub struct RunDir {
    pub root: PathBuf,
    files: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(out: &Path, run: &RunConfig) -> Result<Self, CliError> {
        let root = out.join(run.run_id());
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        let mut dir = RunDir { root, files: Vec::new() };
        dir.write("run_config.json", &to_json_bytes(run))?;
        Ok(dir)
    }

    pub fn open(root: &Path) -> Self {
        RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.files.retain(|(p, _)| p != rel);
        self.files.push((rel.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, &to_json_bytes(value))
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(p, _)| p.as_str())
    }

    /// `index.json`: every file with its digest, plus command-specific links.
    pub fn finish(mut self, run_id: &str, command: &str, extra: Value) -> Result<PathBuf, CliError> {
        self.files.sort();
        let files: Vec<Value> = self.files.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect();
        let index = json!({
            "run_id": run_id,
            "command": command,
            "files": files,
            "links": extra,
        });
        write_atomic(&self.root.join("index.json"), &to_json_bytes(&index))?;
        Ok(self.root)
    }
}
