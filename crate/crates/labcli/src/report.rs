//! CSV tables and JSON summaries written by a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::Experiment;
use crate::LabError;

/// Shortest round-trip text for `v`, so equal runs give equal bytes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), LabError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub experiment: Experiment,
    pub table: Table,
    pub summary: Map<String, Value>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn new(experiment: Experiment, table: Table) -> Self {
        Self {
            experiment,
            table,
            summary: Map::new(),
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    /// Record a failure unless `ok`.
    pub fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn summary_json(&self) -> Value {
        let mut m = self.summary.clone();
        m.insert("experiment".into(), self.experiment.name().into());
        m.insert("pass".into(), self.passed().into());
        m.insert("failures".into(), self.failures.clone().into());
        Value::Object(m)
    }

    /// Writes `<dir>/<experiment>.csv` and `<dir>/<experiment>.json`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), LabError> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.experiment));
        let json = dir.join(format!("{}.json", self.experiment));
        self.table.write_csv(&csv)?;
        let mut text = serde_json::to_string_pretty(&self.summary_json())?;
        text.push('\n');
        fs::write(&json, text)?;
        Ok((csv, json))
    }
}
