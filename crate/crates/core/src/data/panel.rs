use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `T × d` block of equally spaced observations, one column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel<T: Scalar> {
    values: DMatrix<T>,
    names: Vec<String>,
}

impl<T: Scalar> TimeSeriesPanel<T> {
    /// Builds a panel, rejecting non-finite entries, empty shapes and
    /// duplicate or mismatched names.
    pub fn new(values: DMatrix<T>, names: Vec<String>) -> Result<Self> {
        let (len, dim) = values.shape();
        if len == 0 || dim == 0 {
            return Err(Error::InvalidPanel(format!("empty panel ({len}x{dim})")));
        }
        if names.len() != dim {
            return Err(Error::InvalidPanel(format!(
                "{} names for {dim} columns",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidPanel(format!("duplicate series name '{name}'")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel(format!(
                "non-finite value at row {}, column {}",
                pos % len,
                pos / len
            )));
        }
        Ok(Self { values, names })
    }

    /// Builds a panel from equal-length columns.
    pub fn from_columns(columns: Vec<Vec<T>>, names: Vec<String>) -> Result<Self> {
        let dim = columns.len();
        let len = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != len) {
            return Err(Error::InvalidPanel(format!(
                "ragged columns ({} vs {len})",
                bad.len()
            )));
        }
        let flat: Vec<T> = columns.into_iter().flatten().collect();
        Self::new(DMatrix::from_vec(len, dim, flat), names)
    }

    /// Panel with generated names `X0, X1, ...`.
    pub fn from_columns_unnamed(columns: Vec<Vec<T>>) -> Result<Self> {
        let names = (0..columns.len()).map(|i| format!("X{i}")).collect();
        Self::from_columns(columns, names)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    /// Contiguous view of one series.
    pub fn series(&self, index: usize) -> &[T] {
        let len = self.len();
        &self.values.as_slice()[index * len..(index + 1) * len]
    }

    pub fn get(&self, t: usize, series: usize) -> T {
        self.values[(t, series)]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sub-panel with the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        for &c in columns {
            if c >= self.dim() {
                return Err(Error::IndexOutOfRange { index: c, count: self.dim() });
            }
        }
        let cols = columns.iter().map(|&c| self.series(c).to_vec()).collect();
        let names = columns.iter().map(|&c| self.names[c].clone()).collect();
        Self::from_columns(cols, names)
    }

    /// Keeps rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} invalid for length {}",
                self.len()
            )));
        }
        let block = self.values.rows(start, end - start).into_owned();
        Self::new(block, self.names.clone())
    }

    /// Reads the comma-separated format: one header row with the series
    /// names, then one row per time step.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Csv { row: 1, message: e.to_string() })?
            .clone();
        let names: Vec<String> = header.iter().map(str::to_string).collect();
        if names.is_empty() || names.iter().all(String::is_empty) {
            return Err(Error::Csv { row: 1, message: "missing header".into() });
        }
        let dim = names.len();
        let mut columns: Vec<Vec<T>> = vec![Vec::new(); dim];
        for (i, record) in rdr.records().enumerate() {
            // Header is row 1.
            let row = i + 2;
            let record = record.map_err(|e| Error::Csv { row, message: e.to_string() })?;
            if record.len() != dim {
                return Err(Error::Csv {
                    row,
                    message: format!("expected {dim} fields, found {}", record.len()),
                });
            }
            for (j, field) in record.iter().enumerate() {
                if field.is_empty() {
                    return Err(Error::Csv { row, message: format!("missing value in column {}", j + 1) });
                }
                let v: f64 = field.parse().map_err(|_| Error::Csv {
                    row,
                    message: format!("cannot parse '{field}' as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv { row, message: format!("non-finite value '{field}'") });
                }
                columns[j].push(T::lit(v));
            }
        }
        if columns[0].is_empty() {
            return Err(Error::Csv { row: 2, message: "no observations".into() });
        }
        Self::from_columns(columns, names)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Csv { row: 0, message: e.to_string() };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names).map_err(io)?;
        for t in 0..self.len() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| format!("{:e}", self.values[(t, j)]))
                .collect();
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Csv { row: 0, message: e.to_string() })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan() {
        let p = TimeSeriesPanel::from_columns(vec![vec![1.0, f64::NAN]], vec!["a".into()]);
        assert!(matches!(p, Err(Error::InvalidPanel(_))));
    }

    #[test]
    fn rejects_duplicate_names() {
        let p = TimeSeriesPanel::from_columns(
            vec![vec![1.0], vec![2.0]],
            vec!["a".into(), "a".into()],
        );
        assert!(p.is_err());
    }

    #[test]
    fn rejects_empty() {
        let p = TimeSeriesPanel::<f64>::from_columns(vec![], vec![]);
        assert!(p.is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = TimeSeriesPanel::from_columns(
            vec![vec![0.1, -2.5e-7, 3.0], vec![1.0 / 3.0, 4.0, 1e12]],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = TimeSeriesPanel::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn csv_names_offending_row() {
        let text = "a,b\n1,2\n3,oops\n";
        let err = TimeSeriesPanel::<f64>::read_csv(text.as_bytes()).unwrap_err();
        assert_eq!(err, Error::Csv { row: 3, message: "cannot parse 'oops' as a number".into() });
        let text = "a,b\n1,2\n3,\n";
        let err = TimeSeriesPanel::<f64>::read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { row: 3, .. }));
    }

    #[test]
    fn csv_rejects_empty_input() {
        assert!(TimeSeriesPanel::<f64>::read_csv("".as_bytes()).is_err());
        assert!(TimeSeriesPanel::<f64>::read_csv("a,b\n".as_bytes()).is_err());
    }
}
