//! Tables, checks and CSV emission.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use openkpz_core::report::format_real;

use crate::config::RunConfig;

/// A value that can be written as one CSV cell.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format_real(*self)
    }
}

macro_rules! plain_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_cell!(usize, u64, bool, &str, String);

/// One CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem suffix; empty for the experiment's main table.
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

impl Table {
    pub fn new(name: &str, header: &str) -> Self {
        Self { name: name.to_string(), header: header.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: &[&dyn Cell]) {
        let row: Vec<String> = cells.iter().map(|c| c.cell()).collect();
        debug_assert_eq!(row.len(), self.header.split(',').count(), "row arity for {}", self.name);
        self.rows.push(row.join(","));
    }

    pub fn push_raw(&mut self, row: String) {
        self.rows.push(row);
    }

    /// Column header and rows; the deterministic part of the file.
    pub fn body(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn file_name(&self, config: &RunConfig) -> String {
        if self.name.is_empty() {
            format!("{}.csv", config.experiment.name())
        } else {
            format!("{}-{}.csv", config.experiment.name(), self.name)
        }
    }
}

/// A named pass/fail verdict with a one-line explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }

    /// Writes each table with a commented provenance header. Only the
    /// `created_unix` line varies between identical runs.
    pub fn write_all(&self, config: &RunConfig) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&config.out)?;
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let hash = config.hash();
        let mut written = Vec::new();
        for t in &self.tables {
            let path = config.out.join(t.file_name(config));
            let mut f = fs::File::create(&path)?;
            writeln!(f, "# experiment={}", config.experiment.name())?;
            writeln!(f, "# config_hash={hash}")?;
            writeln!(f, "# seed={}", config.seed)?;
            writeln!(f, "# created_unix={created}")?;
            f.write_all(t.body().as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Lines of a written CSV with comment lines dropped.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).flat_map(|l| [l, "\n"]).collect()
}
