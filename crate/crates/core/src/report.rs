//! Assertion records, CSV tables and the run summary. Everything here is
//! deterministic: float cells use the shortest round-trip decimal form and
//! no table carries timestamps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Passed,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl Assertion {
    pub fn check(name: &str, ok: bool, detail: String) -> Assertion {
        Assertion {
            name: name.to_string(),
            outcome: if ok { Outcome::Passed } else { Outcome::Failed },
            detail,
        }
    }

    pub fn skip(name: &str, reason: &str) -> Assertion {
        Assertion {
            name: name.to_string(),
            outcome: Outcome::Skipped,
            detail: format!("skipped: {reason}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub rng_seed: u64,
    pub tables: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

impl Report {
    pub fn failed(&self) -> Vec<&Assertion> {
        self.assertions
            .iter()
            .filter(|a| a.outcome == Outcome::Failed)
            .collect()
    }
}

/// In-memory CSV table with a fixed header.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width mismatch");
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(&self.name), self.to_csv())?;
        Ok(())
    }
}

/// Shortest decimal form that parses back to the same f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn table_renders_header_and_rows() {
        let mut t = Table::new("demo.csv", &["n", "value"]);
        t.push(vec!["1".into(), fmt_float(0.5)]);
        t.push(vec!["2".into(), fmt_float(1.0 / 3.0)]);
        assert_eq!(t.to_csv(), "n,value\n1,0.5\n2,0.3333333333333333\n");

        let dir = tempdir().unwrap();
        t.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("demo.csv")).unwrap();
        assert_eq!(text, t.to_csv());
    }

    #[test]
    fn float_cells_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, -0.0] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn report_collects_failures() {
        let report = Report {
            experiment: "t".into(),
            config_hash: "h".into(),
            rng_seed: 1,
            tables: vec![],
            assertions: vec![
                Assertion::check("a", true, "ok".into()),
                Assertion::check("b", false, "bad".into()),
                Assertion::skip("c", "short schedule"),
            ],
            passed: false,
        };
        let failed = report.failed();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].name, "b");
        assert!(report.assertions[2].detail.starts_with("skipped:"));
    }
}
