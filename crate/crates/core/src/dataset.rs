//! Observation series read from CSV.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("no `y` column (columns: {0:?})")]
    MissingY(Vec<String>),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: missing or non-finite value")]
    Missing { row: usize, column: String },
    #[error("row {row}: y = {value} is not a non-negative integer count")]
    NotCount { row: usize, value: f64 },
    #[error("dataset has no rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// Every column other than `y`, in file order.
    pub covariates: Vec<(String, Vec<f64>)>,
}

impl Dataset {
    pub fn from_y(y: Vec<f64>) -> Self {
        Self { y, covariates: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.covariates.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    /// Parses CSV text with a header row. Row numbers in errors count the
    /// header as row 1.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, counts: bool) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let read_err = |e: csv::Error| DatasetError::Read { path: "<csv>".into(), message: e.to_string() };
        let headers: Vec<String> = rdr.headers().map_err(read_err)?.iter().map(str::to_string).collect();
        let y_idx = headers.iter().position(|h| h == "y").ok_or_else(|| DatasetError::MissingY(headers.clone()))?;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(read_err)?;
            for (j, name) in headers.iter().enumerate() {
                let cell = rec.get(j).unwrap_or("");
                if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
                    return Err(DatasetError::Missing { row, column: name.clone() });
                }
                let v: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::Missing { row, column: name.clone() });
                }
                if counts && j == y_idx && (v < 0.0 || v.fract() != 0.0) {
                    return Err(DatasetError::NotCount { row, value: v });
                }
                cols[j].push(v);
            }
        }
        let y = std::mem::take(&mut cols[y_idx]);
        if y.is_empty() {
            return Err(DatasetError::Empty);
        }
        let covariates = headers
            .into_iter()
            .zip(cols)
            .enumerate()
            .filter(|(j, _)| *j != y_idx)
            .map(|(_, c)| c)
            .collect();
        Ok(Self { y, covariates })
    }

    pub fn load(path: &Path, counts: bool) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)
            .map_err(|e| DatasetError::Read { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_csv_reader(file, counts).map_err(|e| match e {
            DatasetError::Read { message, .. } => DatasetError::Read { path: path.display().to_string(), message },
            other => other,
        })
    }

    /// Writes `y` followed by the other columns.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["y".to_string()];
        header.extend(self.covariates.iter().map(|(n, _)| n.clone()));
        wtr.write_record(&header)?;
        for t in 0..self.y.len() {
            let mut row = vec![self.y[t].to_string()];
            row.extend(self.covariates.iter().map(|(_, c)| c[t].to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
