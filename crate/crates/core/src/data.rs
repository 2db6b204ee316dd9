//! CSV ingestion for the three model families.
//!
//! Every file has a header row and numeric cells. Errors carry the file path
//! and the 1-based line number of the offending record (the header is line 1).

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// A parsed numeric CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Row-major cells.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn column_index(&self, name: &str, path: &Path) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                line: 1,
                message: format!(
                    "missing column `{name}`; found {}",
                    self.headers.join(", ")
                ),
            })
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a header plus numeric records; `path` only labels errors.
pub fn read_table<R: Read>(reader: R, path: &Path) -> Result<Table> {
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(csv_err(1, "file is empty or has no header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                let v: f64 = cell.parse().map_err(|_| {
                    csv_err(line, format!("column `{}`: `{cell}` is not a number", headers[j]))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(csv_err(line, format!("column `{}`: non-finite value", headers[j])))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(1, "no data rows".into()));
    }
    Ok(Table { headers, rows })
}

pub fn load_table(path: &Path) -> Result<Table> {
    read_table(open(path)?, path)
}

/// Logistic regression data with the intercept column prepended to `x`.
#[derive(Debug, Clone)]
pub struct LogisticData {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// `intercept` followed by the covariate column names.
    pub names: Vec<String>,
}

pub fn logistic_from_table(table: &Table, response: &str, path: &Path) -> Result<LogisticData> {
    let r = table.column_index(response, path)?;
    let covariates: Vec<usize> = (0..table.headers.len()).filter(|&j| j != r).collect();
    let n = table.rows.len();
    let mut x = Array2::zeros((n, covariates.len() + 1));
    let mut y = Array1::zeros(n);
    for (i, row) in table.rows.iter().enumerate() {
        let v = row[r];
        if v != 0.0 && v != 1.0 {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                message: format!("response `{response}` must be 0 or 1, got {v}"),
            });
        }
        y[i] = v;
        x[[i, 0]] = 1.0;
        for (k, &j) in covariates.iter().enumerate() {
            x[[i, k + 1]] = row[j];
        }
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(covariates.iter().map(|&j| table.headers[j].clone()));
    Ok(LogisticData { x, y, names })
}

pub fn load_logistic(path: &Path, response: &str) -> Result<LogisticData> {
    logistic_from_table(&load_table(path)?, response, path)
}

/// Spatial data: `n × 2` coordinates and the response.
#[derive(Debug, Clone)]
pub struct SpatialData {
    pub coords: Array2<f64>,
    pub z: Array1<f64>,
}

pub fn spatial_from_table(table: &Table, path: &Path) -> Result<SpatialData> {
    let jx = table.column_index("x", path)?;
    let jy = table.column_index("y", path)?;
    let jz = table.column_index("z", path)?;
    let n = table.rows.len();
    let coords = Array2::from_shape_fn((n, 2), |(i, k)| table.rows[i][if k == 0 { jx } else { jy }]);
    let z = Array1::from(table.column(jz));
    Ok(SpatialData { coords, z })
}

pub fn load_spatial(path: &Path) -> Result<SpatialData> {
    spatial_from_table(&load_table(path)?, path)
}

/// Returns from the first column; with `log_returns` the column holds prices
/// and `log(p_t / p_{t−1})` is returned instead (one value shorter).
pub fn returns_from_table(table: &Table, log_returns: bool, path: &Path) -> Result<Vec<f64>> {
    let col = table.column(0);
    if !log_returns {
        return Ok(col);
    }
    if let Some(i) = col.iter().position(|p| *p <= 0.0) {
        return Err(Error::Csv {
            path: PathBuf::from(path),
            line: i as u64 + 2,
            message: format!("price must be positive for log returns, got {}", col[i]),
        });
    }
    Ok(col.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

pub fn load_returns(path: &Path, log_returns: bool) -> Result<Vec<f64>> {
    returns_from_table(&load_table(path)?, log_returns, path)
}
