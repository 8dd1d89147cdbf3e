//! Run records and artifact writers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Summary of one command invocation, written as `run_record.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub tool_version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<RecordEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

/// One `(p, beta, chain)` cell of a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RecordEntry {
    pub p: usize,
    pub n_p: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logdet: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub distances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bm_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lbb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
}

impl RunRecord {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        RunRecord {
            tool_version: TOOL_VERSION,
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            entries: Vec::new(),
            timings: None,
        }
    }
}

pub fn dist_key(gamma: f64) -> String {
    format!("dist_g{gamma}")
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, content)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

/// A CSV table: comment header, column names, rows.
#[derive(Clone, Debug)]
pub struct Table {
    pub comment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(comment: String, columns: Vec<String>) -> Self {
        Table {
            comment,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("# {}\n{}\n", self.comment, self.columns.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_omits_empty_fields() {
        let mut r = RunRecord::new("fekete", "abc", 1);
        r.entries.push(RecordEntry {
            p: 2,
            n_p: 5,
            sigma: Some(0.0),
            ..Default::default()
        });
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"sigma\":0.0"));
        assert!(!s.contains("tau") && !s.contains("timings"));
    }

    #[test]
    fn table_renders() {
        let mut t = Table::new("h".into(), vec!["a".into(), "b".into()]);
        t.rows.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.render(), "# h\na,b\n1,2\n");
    }
}
