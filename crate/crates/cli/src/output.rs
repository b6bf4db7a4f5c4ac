//! Buffered artifacts, written only after a command has finished.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const ERROR_LOG: &str = "error.log";
pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

#[derive(Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    /// Renders a CSV with a `write_csv`-style callback.
    pub fn csv<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    fn write_all(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_path: String,
    pub config_sha256: String,
    pub tool_version: String,
    pub core_version: String,
    pub summary_schema_version: u32,
    pub seeds: BTreeMap<String, u64>,
    pub workers: usize,
    files: Vec<FileEntry>,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(
        subcommand: &str,
        config_path: &Path,
        config_bytes: &[u8],
        seeds: BTreeMap<String, u64>,
    ) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_bytes),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: nonlocal_core::VERSION.to_string(),
            summary_schema_version: crate::config::SCHEMA_VERSION,
            seeds,
            workers: rayon::current_num_threads(),
            files: Vec::new(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Writes every artifact, then the manifest listing them, and clears a stale error log.
pub fn commit(
    dir: &Path,
    artifacts: &Artifacts,
    mut manifest: Manifest,
) -> Result<PathBuf, CliError> {
    manifest.files = artifacts
        .files
        .iter()
        .map(|(name, bytes)| FileEntry {
            name: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        })
        .collect();
    artifacts.write_all(dir)?;
    let mut buf = serde_json::to_vec_pretty(&manifest)?;
    buf.push(b'\n');
    std::fs::write(dir.join(MANIFEST), buf)?;
    let log = dir.join(ERROR_LOG);
    if log.exists() {
        std::fs::remove_file(log)?;
    }
    Ok(dir.to_path_buf())
}

pub fn write_error_log(dir: &Path, err: &CliError) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(ERROR_LOG), format!("{}\n", err.log_line()))
}

/// Gnuplot script drawing `y` against `x` columns of comma-separated files.
pub fn gnuplot(title: &str, plots: &[(&str, usize, usize, &str)]) -> Vec<u8> {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead\n");
    s.push_str(&format!(
        "set title '{title}'\nset terminal pngcairo size 900,600\nset output '{title}.png'\n"
    ));
    let parts: Vec<String> = plots
        .iter()
        .map(|(file, x, y, style)| format!("'{file}' using {x}:{y} with {style}"))
        .collect();
    s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
    s.into_bytes()
}
