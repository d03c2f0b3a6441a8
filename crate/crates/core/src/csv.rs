//! Minimal numeric CSV helpers shared by the artifact writers.

use crate::error::{Error, Result};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a numeric CSV with the exact given header. Blank lines are skipped.
pub fn parse_rows(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let found: Vec<&str> = head.split(',').map(str::trim).collect();
    if found != header {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            head.trim()
        )));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row {}: expected {} fields, found {}",
                    k + 1,
                    header.len(),
                    cells.len()
                )));
            }
            cells
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: `{c}` is not a number", k + 1)))
                })
                .collect()
        })
        .collect()
}
