//! CSV ingestion and full-precision CSV output.

use std::fs::File;
use std::path::Path;

use rsodc::Matrix;

use crate::error::{CliError, CliResult};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn reader(path: &Path, has_header: bool) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

/// Numeric table with rows as subjects. Returns the header when present.
pub fn read_matrix(path: &Path, has_header: bool) -> CliResult<(Matrix, Option<Vec<String>>)> {
    let mut rdr = reader(path, has_header)?;
    let header = if has_header {
        Some(
            rdr.headers()
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 1 + usize::from(has_header);
        let rec = rec.map_err(|e| CliError::Input(format!("{} line {line}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(CliError::Input(format!(
                    "{} line {line}: expected {w} columns, found {}",
                    path.display(),
                    rec.len()
                )))
            }
            _ => {}
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{} line {line}, column {}: cannot parse `{field}` as a number",
                    path.display(),
                    c + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{} line {line}, column {}: non-finite value",
                    path.display(),
                    c + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok((Matrix::from_row_slice(rows, cols, &values), header))
}

/// First column of a CSV, as strings.
pub fn read_labels(path: &Path, has_header: bool) -> CliResult<Vec<String>> {
    let mut rdr = reader(path, has_header)?;
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), r + 1)))?;
        match rec.get(0) {
            Some(v) if !v.is_empty() => out.push(v.to_string()),
            _ => {}
        }
    }
    if out.is_empty() {
        return Err(CliError::Input(format!("{}: no labels", path.display())));
    }
    Ok(out)
}

/// Writes `m` with the given column names, optionally followed by an integer
/// label column.
pub fn write_matrix(path: &Path, names: &[String], m: &Matrix, labels: Option<&[usize]>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = names.to_vec();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..m.nrows() {
        let mut rec: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of already formatted fields under `header`.
pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn component_names(d: usize) -> Vec<String> {
    (1..=d).map(|c| format!("component_{c}")).collect()
}
