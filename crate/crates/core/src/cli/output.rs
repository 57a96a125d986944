//! Result files: field dumps, CSV tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::grid::{Field, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Csv,
    Pgm,
}

/// Writes a nodal field. CSV rows are `x,value` (1D) or `x,y,value` (2D)
/// after a header line; PGM is 8-bit binary grayscale, min-max normalized,
/// rows ordered by increasing `y`. PGM needs a 2D grid.
pub fn dump_field(field: &Field, format: DumpFormat, path: &Path) -> io::Result<()> {
    let g = field.grid();
    let points: Vec<[f64; 2]> = (0..g.n_nodes()).map(|i| g.node_position(i)).collect();
    write_values(g, &points, &field.values, g.n() - 1, format, path)
}

/// Writes per-cell values at cell centres, same formats as [`dump_field`].
pub fn dump_cells(grid: &GridSpec, values: &[f64], format: DumpFormat, path: &Path) -> io::Result<()> {
    let points: Vec<[f64; 2]> = (0..grid.n_cells()).map(|c| grid.cell_center(c)).collect();
    write_values(grid, &points, values, grid.n(), format, path)
}

fn write_values(grid: &GridSpec, points: &[[f64; 2]], values: &[f64], side: usize, format: DumpFormat, path: &Path) -> io::Result<()> {
    match format {
        DumpFormat::Csv => {
            let mut s = String::new();
            if grid.dim() == 1 {
                s.push_str("x,value\n");
                for (x, v) in points.iter().zip(values) {
                    let _ = writeln!(s, "{:.16e},{}", x[0], num(*v));
                }
            } else {
                s.push_str("x,y,value\n");
                for (x, v) in points.iter().zip(values) {
                    let _ = writeln!(s, "{:.16e},{:.16e},{}", x[0], x[1], num(*v));
                }
            }
            fs::write(path, s)
        }
        DumpFormat::Pgm => {
            if grid.dim() != 2 {
                return Err(io::Error::new(io::ErrorKind::InvalidInput, "pgm output needs a 2D grid"));
            }
            let finite = values.iter().copied().filter(|v| v.is_finite());
            let lo = finite.clone().fold(f64::INFINITY, f64::min);
            let hi = finite.fold(f64::NEG_INFINITY, f64::max);
            let mut bytes = format!("P5\n{side} {side}\n255\n").into_bytes();
            for v in values {
                let level = if !(hi > lo) {
                    128
                } else if v.is_finite() {
                    ((v - lo) / (hi - lo) * 255.0).round() as u8
                } else if *v > 0.0 {
                    255
                } else {
                    0
                };
                bytes.push(level);
            }
            fs::write(path, bytes)
        }
    }
}

/// Round-trip formatting with `inf` spelled out.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

/// Reads back a field written by [`dump_field`] in CSV form.
pub fn read_field_csv(grid: GridSpec, path: &Path) -> io::Result<Field> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for line in text.lines().skip(1) {
        let last = line.rsplit(',').next().unwrap_or("");
        let v = match last {
            "inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            t => t.parse().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{e}")))?,
        };
        values.push(v);
    }
    Field::new(grid, values).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

/// Writes a CSV table.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub exit_code: i32,
    pub wall_time_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub files: Vec<String>,
}
