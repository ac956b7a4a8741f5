//! Run reports and their files: one CSV of result rows, `report.txt`,
//! `timings.csv` and the grid artifacts.
//!
//! Result rows hold only deterministic values, formatted with the shortest
//! round-trip representation, so two runs of one config give identical
//! rows. Wall-times live in `timings.csv` and the report text.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::moserfrag::{GridDiffeo, GridForm};

use super::config::Experiment;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a numeric column, `NaN` where a cell does not parse.
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        let Some(k) = self.column(name) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect()
    }
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub enum Artifact {
    Diffeo { name: String, diffeo: GridDiffeo },
    Form { name: String, form: GridForm },
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub experiment: Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub table: Table,
    pub predicates: Vec<Predicate>,
    pub notes: Vec<String>,
    /// `(stage, seconds)`; not part of the reproducible rows.
    pub timings: Vec<(String, f64)>,
    pub artifacts: Vec<Artifact>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.predicates.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> Vec<&Predicate> {
        self.predicates.iter().filter(|p| !p.passed).collect()
    }

    /// The CSV text of the result rows, the config hash on every row.
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        let header: Vec<&str> = std::iter::once("config_hash")
            .chain(self.table.columns.iter().map(String::as_str))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.table.rows {
            w.write_record(std::iter::once(self.config_hash.as_str()).chain(row.iter().map(String::as_str)))
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment   {}", self.experiment);
        let _ = writeln!(s, "config_hash  {}", self.config_hash);
        let _ = writeln!(s, "seed         {}", self.seed);
        let _ = writeln!(s, "symqm        {}", self.version);
        let _ = writeln!(s, "workers      {}", rayon::current_num_threads());
        let _ = writeln!(s, "rows         {}", self.table.rows.len());
        let total: f64 = self.timings.iter().map(|t| t.1).sum();
        let _ = writeln!(s, "wall_time_s  {total:.3}");
        let _ = writeln!(s, "\npredicates");
        for p in &self.predicates {
            let _ = writeln!(s, "  [{}] {}: {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.detail);
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\nnotes");
            for n in &self.notes {
                let _ = writeln!(s, "  {n}");
            }
        }
        let _ = writeln!(s, "\ntimings");
        for (stage, t) in &self.timings {
            let _ = writeln!(s, "  {stage:<40} {t:.3}s");
        }
        let _ = writeln!(s, "\nresult: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    /// Writes every output under `dir` and returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let csv_path = dir.join(format!("{}.csv", self.experiment));
        std::fs::write(&csv_path, self.csv()?)?;
        out.push(csv_path);
        let report = dir.join("report.txt");
        std::fs::write(&report, self.text())?;
        out.push(report);
        let mut timings = String::from("config_hash,stage,seconds\n");
        for (stage, t) in &self.timings {
            let _ = writeln!(timings, "{},{stage},{t}", self.config_hash);
        }
        let tpath = dir.join("timings.csv");
        std::fs::write(&tpath, timings)?;
        out.push(tpath);
        if !self.artifacts.is_empty() {
            let gdir = dir.join("grids");
            std::fs::create_dir_all(&gdir)?;
            for a in &self.artifacts {
                match a {
                    Artifact::Diffeo { name, diffeo } => {
                        let (b, c) = (gdir.join(format!("{name}.sqgr")), gdir.join(format!("{name}.csv")));
                        diffeo.write_binary(&b)?;
                        diffeo.write_csv(&c)?;
                        out.extend([b, c]);
                    }
                    Artifact::Form { name, form } => {
                        let (b, c) = (gdir.join(format!("{name}.sqgr")), gdir.join(format!("{name}.csv")));
                        form.write_binary(&b)?;
                        form.write_csv(&c)?;
                        out.extend([b, c]);
                    }
                }
            }
        }
        Ok(out)
    }
}
