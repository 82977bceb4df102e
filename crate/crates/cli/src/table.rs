//! CSV ingestion and export of datasets.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use pmoe::Dataset;

use crate::error::{CliError, Result};

/// Which columns of the input file play which role.
#[derive(Debug, Clone)]
pub struct ColumnRoles<'a> {
    pub outcome: &'a str,
    pub treatment: &'a str,
    /// Covariate names; `None` takes every remaining column in file order.
    pub covariates: Option<&'a [String]>,
}

pub fn parse_treatment(value: &str) -> Option<f64> {
    match value.trim().to_ascii_lowercase().as_str() {
        "0" | "false" => Some(0.0),
        "1" | "true" => Some(1.0),
        _ => None,
    }
}

fn position_of(headers: &[String], name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Validation(format!("{}: no column named '{name}'", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        kind => CliError::Parse { path: path.to_path_buf(), line, message: format!("{kind:?}") },
    }
}

/// Reads an unstandardized dataset from a CSV file with a header row.
pub fn read_dataset(path: &Path, roles: &ColumnRoles<'_>) -> Result<Dataset> {
    if roles.outcome == roles.treatment {
        return Err(CliError::Validation("outcome and treatment must be different columns".into()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| csv_error(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(String::is_empty) {
        return Err(CliError::Validation(format!("{}: missing header row", path.display())));
    }
    let y_col = position_of(&headers, roles.outcome, path)?;
    let d_col = position_of(&headers, roles.treatment, path)?;
    let x_cols: Vec<usize> = match roles.covariates {
        Some(names) => names.iter().map(|n| position_of(&headers, n, path)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != y_col && c != d_col).collect(),
    };
    if x_cols.is_empty() {
        return Err(CliError::Validation("no covariate columns".into()));
    }
    if x_cols.iter().any(|&c| c == y_col || c == d_col) {
        return Err(CliError::Validation("covariates must not include the outcome or treatment".into()));
    }
    let names: Vec<String> = x_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut values = Vec::new();
    let mut d = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), line, message };
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let number = |c: usize| -> Result<f64> {
            let raw = field(c);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(format!("column '{}': '{raw}' is not a finite number", headers[c]))),
            }
        };
        y.push(number(y_col)?);
        let raw_d = field(d_col);
        d.push(parse_treatment(raw_d).ok_or_else(|| {
            parse_err(format!("treatment column '{}': '{raw_d}' is not one of 0, 1, true, false", headers[d_col]))
        })?);
        for &c in &x_cols {
            values.push(number(c)?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, x_cols.len(), &values);
    Ok(Dataset::new(x, DVector::from_vec(d), DVector::from_vec(y), Some(names))?)
}

/// Writes `outcome, treatment, covariates...` with round-trip float formatting.
pub fn write_dataset<W: Write>(out: W, ds: &Dataset, outcome: &str, treatment: &str) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Validation(format!("could not write CSV: {e}"));
    let mut header = vec![outcome.to_string(), treatment.to_string()];
    header.extend(ds.column_names().iter().cloned());
    writer.write_record(&header).map_err(io)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        row.clear();
        row.push(format!("{:?}", ds.y()[i]));
        row.push(format!("{}", ds.d()[i] as u8));
        for j in 0..ds.r() {
            row.push(format!("{:?}", ds.x()[(i, j)]));
        }
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::Validation(format!("could not write CSV: {e}")))?;
    Ok(())
}
