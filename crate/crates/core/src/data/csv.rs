use std::path::Path;

use super::Dataset;
use crate::nn::Matrix;
use crate::{Error, Result};

/// Reads `label,feat_1,...,feat_n` rows (no header, no quoting).
///
/// The class count is `max label + 1` unless `classes` is given. Errors carry
/// the 1-based row number.
pub fn load_csv(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let err = |row: usize, reason: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            ::csv::ErrorKind::Io(io) => Error::io(path, io),
            other => err(0, format!("{other:?}")),
        })?;

    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| err(row, e.to_string()))?;
        if record.len() < 2 {
            return Err(err(row, "expected a label and at least one feature".into()));
        }
        let n = record.len() - 1;
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(err(row, format!("expected {w} features, found {n}")));
            }
            _ => {}
        }
        let label_cell = record[0].trim();
        let label: i64 = label_cell
            .parse()
            .map_err(|_| err(row, format!("label `{label_cell}` is not an integer")))?;
        if label < 0 {
            return Err(err(row, format!("label {label} is negative")));
        }
        labels.push(label as usize);
        for (col, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| err(row, format!("feature {} `{cell}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(err(row, format!("feature {} is not finite", col + 1)));
            }
            values.push(v);
        }
    }
    let Some(width) = width else {
        return Err(err(0, "file contains no rows".into()));
    };
    let inferred = labels.iter().max().map_or(0, |m| m + 1);
    let classes = match classes {
        Some(c) if c < inferred => {
            return Err(Error::invalid(
                "classes",
                c,
                format!("labels up to {} present in {}", inferred - 1, path.display()),
            ))
        }
        Some(c) => c,
        None => inferred,
    };
    let rows = labels.len();
    Dataset::new(Matrix::from_vec(rows, width, values)?, labels, classes)
}
