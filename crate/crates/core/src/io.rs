//! CSV and JSON import/export.
//!
//! Numeric CSVs have no header unless stated, one row per line, and may
//! contain `#` comment lines. A matrix file may declare its kind with a first
//! line `#kind=distance` or `#kind=affinity`; distance matrices hold
//! *squared* distances. Floats are written in the shortest form that parses
//! back to the same bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::cluster_eval::Labeling;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::orthogonalize::OrthoTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Rows are points in `R^d`.
    Points,
    /// Square matrix of squared distances.
    Distance,
    /// Square nonnegative affinity matrix.
    Affinity,
}

impl std::str::FromStr for InputKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "points" => Ok(InputKind::Points),
            "distance" => Ok(InputKind::Distance),
            "affinity" => Ok(InputKind::Affinity),
            _ => Err(format!("unknown input kind {s:?} (expected points, distance or affinity)")),
        }
    }
}

/// Shortest round-trip decimal; scientific notation for very small or large
/// magnitudes.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(path, line, e.to_string())
}

/// Reads a dense numeric table, checking that every row has the same width.
pub fn read_numeric_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rows: Vec<f64> = Vec::new();
    let mut width = None;
    let mut count = 0;
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_err(path, line, format!("expected {w} fields, found {}", rec.len())))
            }
            _ => {}
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: not a number: {field:?}", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", col + 1)));
            }
            rows.push(v);
        }
        count += 1;
    }
    let w = width.ok_or_else(|| parse_err(path, 0, "no data rows"))?;
    Ok(Array2::from_shape_vec((count, w), rows).expect("row widths checked"))
}

pub fn read_points(path: &Path) -> Result<Array2<f64>> {
    read_numeric_csv(path)
}

/// The `#kind=` directive on the first line of a matrix file, if any.
pub fn declared_kind(path: &Path) -> Result<Option<InputKind>> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("").trim();
    match first.strip_prefix("#kind=") {
        None => Ok(None),
        Some(k) => k.trim().parse().map(Some).map_err(|e| parse_err(path, 1, e)),
    }
}

/// Reads a square matrix of the given kind; a conflicting `#kind=` directive
/// is an error.
pub fn read_matrix(path: &Path, kind: InputKind) -> Result<SquareMatrix> {
    if kind == InputKind::Points {
        return Err(Error::invalid("read_matrix expects a distance or affinity kind"));
    }
    if let Some(k) = declared_kind(path)? {
        if k != kind {
            return Err(parse_err(path, 1, format!("file declares {k:?} but {kind:?} was requested")));
        }
    }
    let a = read_numeric_csv(path)?;
    if a.nrows() != a.ncols() {
        return Err(parse_err(
            path,
            0,
            format!("matrix is {}x{}, expected square", a.nrows(), a.ncols()),
        ));
    }
    let m = SquareMatrix::new(a)?;
    match kind {
        InputKind::Distance => m.validate_distance()?,
        _ => {
            if m.min_entry() < 0.0 {
                return Err(Error::invalid("affinity entries must be nonnegative"));
            }
        }
    }
    Ok(m)
}

/// Single-column label file; ids may be any token and are compacted in
/// order of first appearance.
pub fn read_labels(path: &Path) -> Result<Labeling> {
    let mut raw = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        match rec.len() {
            1 if rec[0].is_empty() => continue,
            1 => raw.push(rec[0].to_string()),
            w => return Err(parse_err(path, record_line(&rec), format!("expected 1 field, found {w}"))),
        }
    }
    if raw.is_empty() {
        return Err(parse_err(path, 0, "no labels"));
    }
    Ok(Labeling::from_raw(&raw.iter().map(String::as_str).collect::<Vec<_>>()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_rows<'a>(
    path: &Path,
    header: Option<&str>,
    rows: impl Iterator<Item = Vec<String>> + 'a,
) -> Result<()> {
    let mut w = create(path)?;
    if let Some(h) = header {
        writeln!(w, "{h}")?;
    }
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_numeric_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    write_rows(path, None, a.rows().into_iter().map(|r| r.iter().map(|&v| format_f64(v)).collect()))
}

pub fn write_matrix(path: &Path, m: &SquareMatrix, kind: InputKind) -> Result<()> {
    let tag = match kind {
        InputKind::Distance => "#kind=distance",
        InputKind::Affinity => "#kind=affinity",
        InputKind::Points => return Err(Error::invalid("a square matrix cannot be written as points")),
    };
    let rows = m.as_array().rows().into_iter().map(|r| r.iter().map(|&v| format_f64(v)).collect());
    write_rows(path, Some(tag), rows)
}

pub fn write_labels(path: &Path, l: &Labeling) -> Result<()> {
    write_rows(path, None, l.labels().iter().map(|v| vec![v.to_string()]))
}

/// `index,lambda_p0,lambda_pstar` with 1-based index; a missing second
/// spectrum leaves its column out.
pub fn write_spectrum(path: &Path, p0: &Array1<f64>, pstar: Option<&Array1<f64>>) -> Result<()> {
    match pstar {
        Some(ps) => {
            if ps.len() != p0.len() {
                return Err(Error::DimensionMismatch { expected: p0.len(), got: ps.len() });
            }
            let rows = (0..p0.len()).map(|i| vec![(i + 1).to_string(), format_f64(p0[i]), format_f64(ps[i])]);
            write_rows(path, Some("index,lambda_p0,lambda_pstar"), rows)
        }
        None => {
            let rows = (0..p0.len()).map(|i| vec![(i + 1).to_string(), format_f64(p0[i])]);
            write_rows(path, Some("index,lambda"), rows)
        }
    }
}

/// `iter,residual,functional,spectral_sum,restarts`; `iter` counts from 1
/// within each attempt and `restarts` is the number of restarts before it.
pub fn write_trace(path: &Path, t: &OrthoTrace) -> Result<()> {
    let mut iter = 0;
    let mut prev_attempt = 0;
    let rows = (0..t.len()).map(move |k| {
        if t.attempts[k] != prev_attempt {
            prev_attempt = t.attempts[k];
            iter = 0;
        }
        iter += 1;
        vec![
            iter.to_string(),
            format_f64(t.residuals[k]),
            format_f64(t.functional_values[k]),
            format_f64(t.spectral_sums[k]),
            t.attempts[k].to_string(),
        ]
    });
    write_rows(path, Some("iter,residual,functional,spectral_sum,restarts"), rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}
