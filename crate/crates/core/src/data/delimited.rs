use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::Dataset;

pub const MISSING_MARKER: &str = "?";

#[derive(Debug, Clone, PartialEq)]
pub struct DelimitedOptions {
    /// Zero-based column holding the integer label.
    pub label_column: usize,
    pub delimiter: u8,
    pub has_header: bool,
    /// Zero-based columns discarded before parsing.
    pub drop_columns: Vec<usize>,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        Self {
            label_column: 0,
            delimiter: b',',
            has_header: false,
            drop_columns: Vec::new(),
        }
    }
}

/// Loads a delimited numeric table, imputing `?` cells with the mean of the
/// present values in the same column.
pub fn load_delimited(path: &Path, label_column: usize, delimiter: u8) -> Result<Dataset> {
    load_delimited_with(
        path,
        &DelimitedOptions {
            label_column,
            delimiter,
            ..DelimitedOptions::default()
        },
    )
}

pub fn load_delimited_with(path: &Path, opts: &DelimitedOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_name()
        .map_or_else(|| "table".to_string(), |s| s.to_string_lossy().into_owned());
    parse_delimited(file, opts, name)
}

pub fn parse_delimited<R: std::io::Read>(reader: R, opts: &DelimitedOptions, name: String) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut feature_cols = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let row = i + 1;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                column: record.len().min(w),
                message: format!("row has {} fields, expected {w}", record.len()),
            });
        }
        if opts.label_column >= w {
            return Err(Error::Config(format!(
                "label column {} out of range for {w} columns",
                opts.label_column
            )));
        }
        feature_cols = 0;
        for (col, field) in record.iter().enumerate() {
            if col == opts.label_column {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    column: col,
                    message: format!("label {field:?} is not a number"),
                })?;
                if v.fract() != 0.0 {
                    return Err(Error::Parse {
                        row,
                        column: col,
                        message: format!("label {field:?} is not an integer"),
                    });
                }
                labels.push(v as i64);
            } else if !opts.drop_columns.contains(&col) {
                feature_cols += 1;
                if field == MISSING_MARKER {
                    cells.push(None);
                } else {
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        row,
                        column: col,
                        message: format!("cannot parse {field:?} as a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row,
                            column: col,
                            message: format!("non-finite value {field:?}"),
                        });
                    }
                    cells.push(Some(v));
                }
            }
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "table has no data rows".into(),
        });
    }

    let mut means = vec![0.0; feature_cols];
    for (j, mean) in means.iter_mut().enumerate() {
        let present: Vec<f64> = (0..n).filter_map(|r| cells[r * feature_cols + j]).collect();
        *mean = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
    }
    let values = cells
        .iter()
        .enumerate()
        .map(|(k, c)| c.unwrap_or(means[k % feature_cols]))
        .collect();
    Dataset::new(Matrix::from_vec(n, feature_cols, values)?, labels, name)
}
