//! CSV ingestion for the running variable and response columns.

use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct Columns {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Rows skipped because x or y was missing or not a finite number.
    pub dropped: usize,
}

fn parse_cell(raw: Option<&str>) -> Option<f64> {
    let v: f64 = raw?.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads two numeric columns by header name. Incomplete rows are dropped
/// and counted, or rejected when `strict`.
pub fn read_columns(path: &Path, x_col: &str, y_col: &str, strict: bool) -> Result<Columns> {
    if !path.is_file() {
        return Err(CliError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| CliError::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Parse { row: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() {
        return Err(CliError::Parse {
            row: 1,
            message: "file is empty or has no header row".into(),
        });
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let (xi, yi) = (find(x_col)?, find(y_col)?);

    let mut out = Columns {
        x: Vec::new(),
        y: Vec::new(),
        dropped: 0,
    };
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Parse {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        match (parse_cell(record.get(xi)), parse_cell(record.get(yi))) {
            (Some(x), Some(y)) => {
                out.x.push(x);
                out.y.push(y);
            }
            _ if strict => {
                return Err(CliError::Parse {
                    row: line,
                    message: format!("missing or non-numeric value in '{x_col}' or '{y_col}'"),
                })
            }
            _ => out.dropped += 1,
        }
    }
    if out.x.is_empty() {
        return Err(CliError::Parse {
            row: 0,
            message: "no usable data rows".into(),
        });
    }
    Ok(out)
}
