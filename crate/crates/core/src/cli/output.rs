//! CSV tables and the JSON manifest written next to them.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use crate::error::{invalid, Result};

/// One CSV cell: numbers use the shortest round-trip decimal form.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        self.rows
            .iter()
            .map(|r| match &r[k] {
                Cell::Num(v) => Some(*v),
                Cell::Int(v) => Some(*v as f64),
                Cell::Text(_) => None,
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: String,
    columns: &'a [String],
    rows: usize,
}

/// Writes every table and `<command>.manifest.json` into `dir`. Files are written
/// sequentially after all computation has finished.
pub fn write_outputs(dir: &Path, command: &str, tables: &[Table], cfg: &RunConfig, elapsed_s: Option<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    for t in tables {
        fs::write(dir.join(t.file_name()), t.to_csv()?)?;
    }
    let files: Vec<FileEntry> = tables
        .iter()
        .map(|t| FileEntry {
            name: t.file_name(),
            columns: &t.columns,
            rows: t.rows.len(),
        })
        .collect();
    let mut manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "units": {
            "angular_frequency": "rad/us",
            "field": "mT",
            "time": "us",
            "angle_in_config": "deg",
        },
        "solver": {
            "dt_us": cfg.optimize.dt,
            "step_fraction": crate::dynamics::DEFAULT_STEP_FRACTION,
        },
        "config_sha256": cfg.hash()?,
        "config": cfg,
        "files": files,
    });
    if let Some(s) = elapsed_s {
        manifest["elapsed_s"] = json!(s);
    }
    fs::write(dir.join(format!("{command}.manifest.json")), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering() {
        let mut t = Table::new("x", &["a", "b", "c"]);
        t.push(vec![0.1.into(), 3usize.into(), "ok".into()]);
        t.push(vec![f64::INFINITY.into(), 0usize.into(), "".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b,c\n0.1,3,ok\ninf,0,\n");
        assert_eq!(t.column("a").unwrap()[0], 0.1);
        assert!(t.column("c").is_none());
    }
}
