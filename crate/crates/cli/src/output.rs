//! File writers. Numbers are printed with `{:e}` (shortest round-trip form),
//! so equal results give equal bytes.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes a CSV with the given header and rows.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column plot data with a `#` header line.
pub fn write_columns(path: &Path, labels: (&str, &str), rows: &[(f64, f64)]) -> Result<()> {
    let mut s = format!("# {} {}\n", labels.0, labels.1);
    for (a, b) in rows {
        s.push_str(&num(*a));
        s.push(' ');
        s.push_str(&num(*b));
        s.push('\n');
    }
    write_text(path, &s)
}
