//! Versioned CSV and JSON writers. Every file starts with the schema name,
//! its version and the config hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{GlError, Result};

pub struct Table {
    schema: &'static str,
    version: u32,
    columns: Vec<String>,
    body: String,
}

impl Table {
    pub fn new(schema: &'static str, version: u32, columns: Vec<String>) -> Self {
        Table { schema, version, columns, body: String::new() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns.len(), "{} row width", self.schema);
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.body.push(',');
            }
            match c {
                // shortest round-trip decimal, so equal values print equally
                Cell::F(x) => write!(self.body, "{x}").unwrap(),
                Cell::I(x) => write!(self.body, "{x}").unwrap(),
                Cell::S(x) => self.body.push_str(x),
            }
        }
        self.body.push('\n');
    }

    pub fn write(&self, path: &Path, hash: &str) -> Result<()> {
        let mut out = format!("# schema={} version={} config_hash={hash}\n", self.schema, self.version);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        out.push_str(&self.body);
        write_file(path, &out)
    }
}

pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::I(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::I(x as i64)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| GlError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    schema: &'static str,
    version: u32,
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// JSON has no comments, so the stamp goes into the leading fields.
pub fn write_json<T: Serialize>(path: &Path, schema: &'static str, version: u32, hash: &str, body: &T) -> Result<PathBuf> {
    let v = Stamped { schema, version, config_hash: hash, body };
    let text = serde_json::to_string_pretty(&v).map_err(|e| GlError::Config(e.to_string()))?;
    write_file(path, &(text + "\n"))?;
    Ok(path.to_path_buf())
}

pub fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
