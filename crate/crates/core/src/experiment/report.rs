//! Run reports and CSV output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Passes when value ≤ tolerance.
    AtMost,
    /// Passes when value ≥ tolerance.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Metric {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            comparison: Comparison::AtMost,
            pass: value <= tolerance,
        }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            comparison: Comparison::AtLeast,
            pass: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub pass: bool,
    pub metrics: Vec<Metric>,
    pub provenance: Provenance,
    /// Data files written next to the report, relative to the output directory.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")
    }
}

/// Writes one CSV table with a fixed header.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Shortest round-trip decimal form; identical values give identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
