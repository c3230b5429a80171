use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record of one command invocation, written to `runs/<timestamp>/manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 over the input files' relative paths and contents.
    pub input_hash: String,
    pub inputs: Vec<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            input_hash: String::new(),
            inputs: Vec::new(),
            started_at: Utc::now(),
            finished_at: None,
            exit_code: None,
            error: None,
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, run_dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// A fresh `runs/<timestamp>` directory name; a numeric suffix keeps
/// runs started within the same millisecond apart.
pub fn new_run_dir(runs_root: &Path, at: DateTime<Utc>) -> PathBuf {
    let stamp = at.format("%Y%m%dT%H%M%S%.3fZ").to_string();
    let mut dir = runs_root.join(&stamp);
    let mut n = 1;
    while dir.exists() {
        dir = runs_root.join(format!("{stamp}-{n}"));
        n += 1;
    }
    dir
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        let hidden = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path);
        }
    }
    let _ = root;
    Ok(())
}

/// Content hash of files and directory trees (hidden entries skipped).
pub fn hash_inputs(inputs: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for input in inputs {
        let mut files = Vec::new();
        if input.is_dir() {
            collect_files(input, input, &mut files)?;
        } else {
            files.push(input.clone());
        }
        for file in files {
            let rel = file.strip_prefix(input).unwrap_or(&file);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            let mut f = fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
            let mut buf = Vec::new();
            f.read_to_end(&mut buf).map_err(|e| Error::io(&file, e))?;
            hasher.update((buf.len() as u64).to_le_bytes());
            hasher.update(&buf);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}
