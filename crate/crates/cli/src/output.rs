//! CSV and table rendering.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};

use crate::{Failure, Format};

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| anyhow!("csv: {e}"))
    }

    /// Columns padded to their widest cell, numbers right-aligned.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| {
                    if c.parse::<f64>().is_ok() {
                        format!("{c:>w$}")
                    } else {
                        format!("{c:<w$}")
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(self.header.clone());
        out.push('\n');
        out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
            out.push('\n');
        }
        out
    }

    /// Prints in `format`, and writes `<out>/<stem>.csv` when `out` is set.
    pub fn emit(&self, format: Format, out: Option<&Path>, stem: &str) -> Result<(), Failure> {
        let csv = self.to_csv().map_err(Failure::runtime)?;
        if let Some(dir) = out {
            write_file(dir, &format!("{stem}.csv"), &csv)?;
        }
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        match format {
            Format::Csv => lock.write_all(&csv),
            Format::Table => lock.write_all(self.to_text().as_bytes()),
        }
        .context("writing to stdout")
        .map_err(Failure::runtime)
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::config(anyhow!("cannot create output directory {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Failure::config(anyhow!("cannot write {}: {e}", path.display())))
}

/// Full precision for CSV cells; shortest round-trip form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
