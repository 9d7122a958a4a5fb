//! Plain comma-separated sample input: one observation per row, `.` as
//! the decimal separator, optional single header row.

use std::path::Path;

use crate::error::{Error, Result};
use crate::standardize::SampleMatrix;

/// Parse an `n x p` sample from `path`. When `header` is set the first
/// line is skipped. Errors carry 1-based row/column locations.
pub fn parse_sample_csv(path: &Path, header: bool) -> Result<SampleMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_sample_str(&text, header)
}

/// Same as [`parse_sample_csv`] on in-memory text.
pub fn parse_sample_str(text: &str, header: bool) -> Result<SampleMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let row_no = idx + 1;
        if idx == 0 && header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(width);
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row: row_no,
                col: c + 1,
                msg: format!("not a number: `{}`", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv { row: row_no, col: c + 1, msg: "non-finite value".into() });
            }
            row.push(v);
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(Error::Csv {
                row: row_no,
                col: row.len().min(width) + 1,
                msg: format!("expected {} columns, found {}", width, row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv { row: 1, col: 1, msg: "no data rows".into() });
    }
    SampleMatrix::from_rows(&rows)
}
