//! Result files: CSV tables with unit-tagged headers, JSON side files and the
//! run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &'static str, header: &[&'static str], rows: Vec<Vec<String>>) -> Self {
        Self {
            file,
            header: header.to_vec(),
            rows,
        }
    }
}

pub enum Artifact {
    Csv(Table),
    Json { file: &'static str, value: Value },
}

impl Artifact {
    pub fn file(&self) -> &'static str {
        match self {
            Artifact::Csv(t) => t.file,
            Artifact::Json { file, .. } => file,
        }
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Empty cell for a missing value.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub verb: &'a str,
    pub master_seed: u64,
    pub threads: usize,
    pub temperature_c: f64,
    pub wall_time_s: f64,
    pub files: Vec<&'static str>,
    pub warnings: &'a [String],
    pub summary: &'a Value,
    pub config: &'a RunConfig,
}

fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(path)?;
    writer.write_record(&table.header)?;
    for row in &table.rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes every artifact into `dir`, which is created if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for artifact in artifacts {
        let path = dir.join(artifact.file());
        match artifact {
            Artifact::Csv(table) => write_csv(&path, table)?,
            Artifact::Json { value, .. } => write_json(&path, value)?,
        }
        written.push(path);
    }
    Ok(written)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, manifest)?;
    Ok(path)
}
