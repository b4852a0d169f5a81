//! Files written by a run and the manifest that lists them.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Shortest text that parses back to the same float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// A CSV table with a fixed header.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn to_bytes(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub workers: usize,
    /// Canonical text of the run configuration.
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub exit_code: i32,
    pub files: Vec<FileEntry>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Writes outputs into one directory and records their checksums.
pub struct OutDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

#[derive(Debug)]
pub struct IoFailure(pub String);

fn io_context(path: &Path, e: io::Error) -> IoFailure {
    IoFailure(format!("{}: {e}", path.display()))
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, IoFailure> {
        fs::create_dir_all(root).map_err(|e| io_context(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoFailure> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| io_context(&path, e))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), IoFailure> {
        let bytes = table.to_bytes().map_err(|e| io_context(&self.root.join(name), e))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), IoFailure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| IoFailure(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest, IoFailure> {
        manifest.files = self.files.clone();
        self.json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}
