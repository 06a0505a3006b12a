//! CSV emission with round-trip exact number formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
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

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.to_string())
    }
}

/// Seventeen significant digits, `.` decimal separator.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => format_f64(*v),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub fn render_csv(columns: &[String], rows: &[Vec<Cell>]) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn write_csv(path: &Path, columns: &[String], rows: &[Vec<Cell>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, render_csv(columns, rows))?;
    Ok(())
}

/// `(t, value)` tabulation of a kernel profile.
pub fn write_kernel_table(path: &Path, ts: &[f64], values: &[f64]) -> Result<()> {
    let rows: Vec<Vec<Cell>> = ts
        .iter()
        .zip(values)
        .map(|(&t, &v)| vec![t.into(), v.into()])
        .collect();
    write_csv(path, &["t".to_string(), "value".to_string()], &rows)
}

/// `(ell, multiplicity, lambda)` table of zonal eigenvalues.
pub fn write_eigen_table(path: &Path, eigenvalues: &[f64], multiplicities: &[usize]) -> Result<()> {
    let rows: Vec<Vec<Cell>> = eigenvalues
        .iter()
        .zip(multiplicities)
        .enumerate()
        .map(|(l, (&v, &m))| vec![l.into(), m.into(), v.into()])
        .collect();
    let cols = ["ell", "multiplicity", "lambda"].map(String::from);
    write_csv(path, &cols, &rows)
}
