//! CSV and JSON artifacts.
//!
//! Numbers are written in Rust's shortest round-trip form, so reading a
//! file back yields bit-identical values. Matrices are row-major without a
//! header; series carry a `k,y1,..,yN` header line.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lgssm::TimeSeries;

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {line_no}: `{}`: {e}", field.trim()),
            })
        })
        .collect()
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_text(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(path, i + 1, l))
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: "matrix rows are empty or ragged".into(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes the observations of `series`, one row per time step `k = 1..K`.
pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let ny = series.ny();
    let mut out = String::from("k");
    for i in 1..=ny {
        out.push_str(&format!(",y{i}"));
    }
    out.push('\n');
    for (k, y) in series.observations.iter().enumerate() {
        out.push_str(&(k + 1).to_string());
        for v in y.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "empty file".into(),
    })?;
    if !header.1.trim_start().starts_with('k') {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: "missing `k,y1,..` header".into(),
        });
    }
    let mut obs = Vec::new();
    for (i, line) in lines {
        let row = parse_row(path, i + 1, line)?;
        if row.len() < 2 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: expected k and at least one value", i + 1),
            });
        }
        obs.push(DVector::from_column_slice(&row[1..]));
    }
    TimeSeries::new(obs).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Writes `body` as pretty JSON with the version and config hash fields
/// added at the top level.
pub fn write_json<T: Serialize>(path: &Path, body: &T, config_hash: &str) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    let stamp = json!({
        "format_version": FORMAT_VERSION,
        "tool_version": TOOL_VERSION,
        "config_hash": config_hash,
    });
    match (&mut value, stamp) {
        (Value::Object(map), Value::Object(extra)) => map.extend(extra),
        (_, stamp) => value = json!({ "stamp": stamp, "body": value }),
    }
    let text = serde_json::to_string_pretty(&value)?;
    write_text(path, &(text + "\n"))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn write_plain(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

pub fn read_plain(path: &Path) -> Result<String> {
    read_text(path)
}
