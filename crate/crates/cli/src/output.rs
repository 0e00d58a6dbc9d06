//! Writers for JSON, JSON-lines and CSV outputs. Every float is printed with
//! 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use collapse_core::dynamics::{fmt_f64, TrajectoryRow};
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

/// Serializes `value` as indented JSON with fixed-precision floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Record(e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// Single-line variant of [`to_json`].
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Record(e.to_string()))?;
    let mut out = String::new();
    write_compact(&mut out, &v);
    Ok(out)
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    if n.is_f64() {
        out.push_str(&fmt_f64(n.as_f64().expect("f64 number")));
    } else {
        let _ = write!(out, "{n}");
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push_str(&Value::String(s.to_string()).to_string());
}

fn write_compact(out: &mut String, v: &Value) {
    match v {
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_compact(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, k);
                out.push(':');
                write_compact(out, item);
            }
            out.push('}');
        }
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth + 1);
    match v {
        // Arrays of scalars stay on one line.
        Value::Array(items) if items.iter().all(is_scalar) => write_compact(out, v),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(depth));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad);
                write_string(out, k);
                out.push_str(": ");
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(depth));
            out.push('}');
        }
        scalar => write_compact(out, scalar),
    }
}

/// One JSON line per generation row.
pub fn trajectory_jsonl(rows: &[TrajectoryRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&to_json_line(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses one line written by [`trajectory_jsonl`], checking the row is
/// internally consistent.
pub fn parse_row_line(line: &str) -> Result<TrajectoryRow> {
    let row: TrajectoryRow =
        serde_json::from_str(line).map_err(|e| CliError::Record(e.to_string()))?;
    if row.mu.len() != row.theta.len() || row.mu.is_empty() {
        return Err(CliError::Record(format!(
            "mu has {} weights, theta has {}",
            row.mu.len(),
            row.theta.len()
        )));
    }
    if row.support_size == 0 || row.support_size > row.mu.len() {
        return Err(CliError::Record(format!(
            "support size {} outside 1..={}",
            row.support_size,
            row.mu.len()
        )));
    }
    Ok(row)
}

/// Comma-separated table; floats use [`fmt_f64`].
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
}

pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let cols: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        Csv {
            text: format!("{}\n", cols.join(",")),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let items: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Int(v) => v.to_string(),
                Cell::Float(v) => fmt_f64(v),
                Cell::Text(s) => s,
            })
            .collect();
        self.text.push_str(&items.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Collects output files under one directory and remembers their names for
/// the manifest.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}
