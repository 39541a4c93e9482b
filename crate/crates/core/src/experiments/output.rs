use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Numeric table written as CSV with 9 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if v.is_nan() {
                    out.push_str("NaN");
                } else {
                    write!(out, "{v:.8e}").expect("writing to a String");
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    /// `n` evenly spaced points including both ends.
    pub fn linspace(name: &str, lo: f64, hi: f64, n: usize) -> Result<Self, ExperimentError> {
        if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && !(hi > lo)) {
            return Err(ExperimentError::Config(format!("bad axis {name}: [{lo}, {hi}] with {n} points")));
        }
        let values = if n == 1 {
            vec![lo]
        } else {
            (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect()
        };
        Ok(Self { name: name.to_string(), values })
    }
}

/// Rectangular grid of cell values; `values[i * axis2.len() + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub value_name: String,
    pub values: Vec<f64>,
}

impl SweepGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.values.len(), self.axis2.values.len())
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.values.len() + j]
    }

    /// Long format: one row per cell.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[&self.axis1.name, &self.axis2.name, &self.value_name]);
        for (i, &a) in self.axis1.values.iter().enumerate() {
            for (j, &b) in self.axis2.values.iter().enumerate() {
                t.push(vec![a, b, self.at(i, j)]);
            }
        }
        t
    }
}

/// Sidecar written next to every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub recipe: String,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub axes: BTreeMap<String, Vec<f64>>,
    pub params: serde_json::Value,
    pub summary: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: Table,
    pub meta: RunMeta,
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_outputs(out: &Path, run: &RunOutput) -> Result<(), ExperimentError> {
    let io = |source: std::io::Error, path: &Path| ExperimentError::Io { path: path.display().to_string(), source };
    std::fs::write(out, run.table.to_csv()).map_err(|e| io(e, out))?;
    let meta = meta_path(out);
    let text = serde_json::to_string_pretty(&run.meta).expect("metadata serializes");
    std::fs::write(&meta, text + "\n").map_err(|e| io(e, &meta))?;
    Ok(())
}
