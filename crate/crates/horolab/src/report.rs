//! CSV, JSON summary, manifest and plot-data output.

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::PathBuf;

use crate::config::{hex, ExperimentConfig};

/// Rows of string cells under a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acceptance {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Acceptance {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

/// Everything an experiment hands back for writing.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub table: Table,
    pub estimates: Map<String, Value>,
    pub acceptance: Vec<Acceptance>,
    /// Additional files as `(name, contents)`.
    pub extra_files: Vec<(String, String)>,
    /// Two-column plot data as `(name, points)`.
    pub plots: Vec<(String, Vec<(f64, f64)>)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.acceptance.iter().all(|a| a.pass)
    }

    pub fn estimate(&mut self, key: &str, v: impl Serialize) {
        self.estimates.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

pub fn csv_bytes(table: &Table) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn plot_text(points: &[(f64, f64)]) -> String {
    points.iter().map(|(x, y)| format!("{x} {y}\n")).collect()
}

/// Paths of the files written for one run.
#[derive(Debug, Clone)]
pub struct Written {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

/// Write the CSV, extra files, plot data, summary and manifest into the
/// configured output directory.
pub fn emit(cfg: &ExperimentConfig, out: &Outcome) -> io::Result<Written> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut hashes = Map::new();
    let mut put = |name: &str, bytes: &[u8]| -> io::Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        hashes.insert(name.into(), Value::String(hex(&Sha256::digest(bytes))));
        Ok(p)
    };
    let csv = put(&format!("{}.csv", cfg.experiment), &csv_bytes(&out.table)?)?;
    for (name, text) in &out.extra_files {
        put(name, text.as_bytes())?;
    }
    for (name, points) in &out.plots {
        put(name, plot_text(points).as_bytes())?;
    }
    let summary_value = json!({
        "experiment": cfg.experiment,
        "config_hash": cfg.hash(),
        "estimates": out.estimates,
        "acceptance": out.acceptance,
        "pass": out.passed(),
    });
    let summary = put("summary.json", pretty(&summary_value).as_bytes())?;
    let manifest_value = json!({
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "output_dir": cfg.output_dir.display().to_string(),
        "params": cfg.params,
        "config_hash": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "files": hashes,
    });
    let manifest = dir.join("manifest.json");
    fs::write(&manifest, pretty(&manifest_value))?;
    Ok(Written { csv, summary, manifest })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}
