//! Minimal CSV ingestion for numeric matrices, plus a writer that
//! round-trips f64 exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Load a rectangular numeric CSV. An optional header row is detected by any
/// field of the first row failing to parse as a number. With `has_labels`,
/// the last column is read as an integer label. Errors point at the first
/// bad cell in 1-based file coordinates.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut expected_width: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let row_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();

        if idx == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue; // header row
        }

        let width = fields.len();
        match expected_width {
            None => {
                let min_width = if has_labels { 2 } else { 1 };
                if width < min_width {
                    return Err(Error::ParseError {
                        row: row_no,
                        col: 1,
                        msg: format!("row has {width} fields, need at least {min_width}"),
                    });
                }
                expected_width = Some(width);
            }
            Some(w) if w != width => {
                return Err(Error::RaggedRows {
                    row: row_no,
                    got: width,
                    expected: w,
                });
            }
            _ => {}
        }

        let coord_count = if has_labels { width - 1 } else { width };
        let mut row = Vec::with_capacity(coord_count);
        for (c, field) in fields[..coord_count].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::ParseError {
                row: row_no,
                col: c + 1,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            row.push(v);
        }
        if has_labels {
            let field = fields[width - 1];
            let l: i64 = field.parse().map_err(|_| Error::ParseError {
                row: row_no,
                col: width,
                msg: format!("cannot parse {field:?} as an integer label"),
            })?;
            labels.push(l);
        }
        rows.push(row);
    }

    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let points = Array2::from_shape_vec((n, d), flat).expect("rectangular by construction");
    Dataset::new(points, if has_labels { Some(labels) } else { None })
}

/// Write a dataset as CSV with a `x_0,…,x_{d−1}[,label]` header. Coordinates
/// are printed with 17 significant digits so reloading reproduces them
/// bitwise.
pub fn save_points_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let d = data.d();
    let labeled = data.labels().is_some();

    let mut header: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
    if labeled {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;

    for i in 0..data.n() {
        let mut fields: Vec<String> =
            data.point(i).iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(labels) = data.labels() {
            fields.push(labels[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}
