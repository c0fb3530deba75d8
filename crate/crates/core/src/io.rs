//! CSV formats: data matrices (header row of column names), square
//! matrices (header of names, no row labels) and edge lists.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{DataMatrix, EdgeSet, PartialCorrelationMatrix, PrecisionMatrix};

/// Parses a numeric CSV with a header row. Errors name the offending row
/// (1-based, counting the header) and column.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidData("missing header row".into()));
    }
    let p = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::InvalidData(format!("row {line}: {e}")))?;
        if record.len() != p {
            return Err(Error::InvalidData(format!(
                "row {line}: expected {p} fields, found {}",
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidData(format!("row {line}, column {} (`{}`): cannot parse `{field}`", c + 1, names[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "row {line}, column {} (`{}`): non-finite value",
                    c + 1,
                    names[c]
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok((names, DMatrix::from_row_slice(rows, p, &values)))
}

pub fn read_data_csv(path: &Path) -> Result<DataMatrix> {
    let (names, values) = read_matrix_csv(File::open(path)?)?;
    DataMatrix::new(values, names)
}

pub fn write_matrix_csv<W: Write>(out: W, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    if names.len() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{} names for {} columns",
            names.len(),
            m.ncols()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(File::create(path)?, names, m)
}

pub fn write_data_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    write_matrix_file(path, data.names(), data.values())
}

/// Default column names `X1..Xp`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("X{i}")).collect()
}

/// Reads a square precision matrix, symmetrizing tiny asymmetries.
pub fn read_precision_csv(path: &Path) -> Result<(Vec<String>, PrecisionMatrix)> {
    let (names, m) = read_matrix_csv(File::open(path)?)?;
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{}: precision matrix is {}×{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok((names, PrecisionMatrix::from_external(m)?))
}

/// One row per edge: 1-based `i < j`, partial correlation and precision entry.
pub fn write_edge_list<W: Write>(
    out: W,
    edges: &EdgeSet,
    pcor: Option<&PartialCorrelationMatrix>,
    omega: Option<&PrecisionMatrix>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "pcor", "omega"])?;
    for (i, j) in edges.iter() {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        w.write_record([
            (i + 1).to_string(),
            (j + 1).to_string(),
            fmt(pcor.map(|m| m.get(i, j))),
            fmt(omega.map(|m| m.matrix()[(i, j)])),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge list with 1-based `i, j` in the first two columns.
pub fn read_edge_list<R: Read>(input: R, p: usize) -> Result<EdgeSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let mut set = EdgeSet::empty(p);
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::InvalidData(format!("row {line}: {e}")))?;
        let idx = |c: usize| -> Result<usize> {
            record
                .get(c)
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&v| v >= 1 && v <= p)
                .map(|v| v - 1)
                .ok_or_else(|| Error::InvalidData(format!("row {line}, column {}: expected a node index in 1..={p}", c + 1)))
        };
        let (i, j) = (idx(0)?, idx(1)?);
        set.insert(i, j)
            .map_err(|_| Error::InvalidData(format!("row {line}: self-loop ({}, {})", i + 1, j + 1)))?;
    }
    Ok(set)
}

pub fn read_edge_file(path: &Path, p: usize) -> Result<EdgeSet> {
    read_edge_list(File::open(path)?, p)
}
