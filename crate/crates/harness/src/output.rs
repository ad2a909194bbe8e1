//! CSV tables with `.meta.json` sidecars. Floats use Rust's shortest
//! round-trip `{:e}` form so repeated runs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub config_sha256: String,
    pub seed: u64,
    pub version: &'static str,
    pub command: String,
}

/// A table collected in memory and written once.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push_numbers(&mut self, values: impl IntoIterator<Item = f64>) {
        let row: Vec<String> = values.into_iter().map(num).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Single writer for one run directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, meta: Meta) -> Result<Self, HarnessError> {
        fs::create_dir_all(root).map_err(|e| HarnessError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), meta, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<(), HarnessError> {
        let path = self.root.join(name);
        let io = |e: &dyn std::fmt::Display| HarnessError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| io(&e))?;
        w.write_record(&table.header).map_err(|e| io(&e))?;
        for row in &table.rows {
            w.write_record(row).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))?;
        let meta_path = self.root.join(format!("{name}.meta.json"));
        let mut text = serde_json::to_string_pretty(&self.meta).map_err(|e| io(&e))?;
        text.push('\n');
        fs::write(&meta_path, text).map_err(|e| io(&e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), HarnessError> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}
