//! Experiment reports: JSON documents and versioned CSV tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{Format, LoadedConfig};

pub const REPORT_VERSION: u32 = 1;
const CSV_MAGIC: &str = "# dsgd-lab csv";

/// A rectangular table of already-formatted cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column `name` parsed as `f64`.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name).with_context(|| format!("no column {name:?}"))?;
        self.rows
            .iter()
            .map(|r| r[idx].parse::<f64>().with_context(|| format!("column {name:?}: {:?} is not a number", r[idx])))
            .collect()
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn cell(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub kind: String,
    /// Distinguishes reports produced by one experiment, e.g. sweep cells.
    pub label: String,
    pub config: Value,
    pub config_hash: String,
    /// Theorem preconditions checked for this report, by name.
    pub preconditions: Map<String, Value>,
    pub records: Vec<Value>,
    pub table: Table,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

impl Report {
    pub fn new(kind: &str, label: impl Into<String>, cfg: &LoadedConfig) -> Self {
        Self {
            version: REPORT_VERSION,
            kind: kind.to_string(),
            label: label.into(),
            config: cfg.raw.clone(),
            config_hash: cfg.hash(),
            preconditions: Map::new(),
            records: Vec::new(),
            table: Table::default(),
            timing: Timing::default(),
        }
    }

    pub fn precondition(&mut self, name: &str, met: Option<bool>) {
        self.preconditions.insert(name.to_string(), met.map_or(Value::Null, Value::Bool));
    }

    /// Everything except timing, serialized deterministically.
    pub fn metric_payload(&self) -> String {
        let v = json!({
            "version": self.version,
            "kind": self.kind,
            "label": self.label,
            "config_hash": self.config_hash,
            "preconditions": self.preconditions,
            "records": self.records,
            "table": self.table,
        });
        serde_json::to_string(&v).expect("report serializes")
    }

    fn stem(&self) -> String {
        let hash = &self.config_hash[..12.min(self.config_hash.len())];
        if self.label.is_empty() {
            format!("{}-{hash}", self.kind)
        } else {
            format!("{}-{hash}-{}", self.kind, self.label)
        }
    }

    /// Writes the report in each requested format and returns the paths.
    pub fn write(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut out = Vec::new();
        for f in formats {
            let path = match f {
                Format::Json => {
                    let p = dir.join(format!("{}.json", self.stem()));
                    fs::write(&p, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", p.display()))?;
                    p
                }
                Format::Csv => {
                    let p = dir.join(format!("{}.csv", self.stem()));
                    write_csv(&p, &self.kind, &self.table)?;
                    p
                }
            };
            out.push(path);
        }
        Ok(out)
    }
}

pub fn write_csv(path: &Path, kind: &str, table: &Table) -> Result<()> {
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(file, "{CSV_MAGIC} v{REPORT_VERSION} kind={kind}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]; returns the kind and the table.
pub fn read_csv(path: &Path) -> Result<(String, Table)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let Some(tail) = first.strip_prefix(CSV_MAGIC) else {
        bail!("{}: missing version header", path.display());
    };
    let mut parts = tail.split_whitespace();
    let version = parts.next().and_then(|v| v.strip_prefix('v')).and_then(|v| v.parse::<u32>().ok());
    if version != Some(REPORT_VERSION) {
        bail!("{}: unsupported csv version {:?}", path.display(), version);
    }
    let kind = parts.next().and_then(|k| k.strip_prefix("kind=")).unwrap_or_default().to_string();
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let columns = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok((kind, Table { columns, rows }))
}

pub fn read_json(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// JSON schema every written report satisfies.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.2, 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(cell(v).parse::<f64>().unwrap(), v);
        }
    }
}
