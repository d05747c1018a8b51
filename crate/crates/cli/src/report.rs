//! Scenario results and their CSV form.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::{io_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// The relation being tested, in words.
    pub identity: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, identity: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            identity: identity.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, identity: &str, value: f64, threshold: f64) -> Self {
        Self {
            passed: value >= threshold,
            ..Self::at_most(name, identity, value, threshold)
        }
    }

    pub fn holds(name: &str, identity: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            identity: identity.into(),
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            passed: ok,
        }
    }
}

/// One CSV file: named columns and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<String>) -> Self {
        Self {
            name: name.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: String,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub timings: Vec<(String, Duration)>,
    pub files: Vec<PathBuf>,
}

impl ScenarioReport {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.into(),
            checks: Vec::new(),
            tables: Vec::new(),
            timings: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut out = format!("scenario {}\n", self.scenario);
        for c in &self.checks {
            out += &format!(
                "  {:<4} {:<34} {:>12.4e}  (limit {:.1e})  {}\n",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold,
                c.identity
            );
        }
        for (stage, t) in &self.timings {
            out += &format!("  time {stage}: {:.3}s\n", t.as_secs_f64());
        }
        for f in &self.files {
            out += &format!("  wrote {}\n", f.display());
        }
        out
    }

    /// Writes every table plus a table of the checks into `dir`.
    pub fn write_csv(&mut self, dir: &Path, config_hash: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut checks = Table::new(
            &format!("{}-checks", self.scenario),
            vec!["value".into(), "threshold".into(), "passed".into()],
        );
        for c in &self.checks {
            checks.push(vec![c.value, c.threshold, if c.passed { 1.0 } else { 0.0 }]);
        }
        let names: Vec<String> = self.checks.iter().map(|c| c.name.clone()).collect();
        let mut files = Vec::new();
        for t in &self.tables {
            files.push(write_table(dir, t, None, config_hash)?);
        }
        files.push(write_table(dir, &checks, Some(&names), config_hash)?);
        self.files = files;
        Ok(())
    }
}

fn write_table(dir: &Path, table: &Table, labels: Option<&[String]>, config_hash: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut file = std::fs::File::create(&path).map_err(io_err(&path))?;
    writeln!(
        file,
        "# config_sha256={config_hash} version={}",
        env!("CARGO_PKG_VERSION")
    )
    .map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = table.header.clone();
    if labels.is_some() {
        header.insert(0, "check".into());
    }
    w.write_record(&header)?;
    for (k, row) in table.rows.iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        if let Some(l) = labels {
            rec.insert(0, l[k].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}
