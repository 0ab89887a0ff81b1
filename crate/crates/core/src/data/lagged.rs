use nalgebra::{DMatrix, DVector};

use super::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lag structure of a structural-equation fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagSpec {
    pub max_lag: usize,
    pub include_instantaneous: bool,
}

impl LagSpec {
    pub fn new(max_lag: usize, include_instantaneous: bool) -> Self {
        Self { max_lag, include_instantaneous }
    }
}

/// Identifies a predictor column: the value of `series` at time `t - lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnTag {
    pub series: usize,
    pub lag: usize,
}

/// Regression problem for one target series.
///
/// Row `r` is the response at time `first_time + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T: Scalar> {
    pub predictors: DMatrix<T>,
    pub response: DVector<T>,
    pub column_tags: Vec<ColumnTag>,
    pub first_time: usize,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn rows(&self) -> usize {
        self.response.len()
    }

    pub fn columns(&self) -> usize {
        self.predictors.ncols()
    }

    /// Contiguous view of one predictor column.
    pub fn column(&self, j: usize) -> &[T] {
        let n = self.rows();
        &self.predictors.as_slice()[j * n..(j + 1) * n]
    }

    /// Design restricted to the columns for which `keep` holds.
    pub fn filter_columns(&self, keep: impl Fn(&ColumnTag) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.columns()).filter(|&j| keep(&self.column_tags[j])).collect();
        let predictors = self.predictors.select_columns(idx.iter());
        Self {
            predictors,
            response: self.response.clone(),
            column_tags: idx.iter().map(|&j| self.column_tags[j]).collect(),
            first_time: self.first_time,
        }
    }

    /// Keeps only the given rows (in order).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            predictors: self.predictors.select_rows(rows.iter()),
            response: self.response.select_rows(rows.iter()),
            column_tags: self.column_tags.clone(),
            first_time: self.first_time,
        }
    }
}

/// Lagged design for `target` using rows `t = spec.max_lag .. T`.
///
/// Columns are the target's own lags `1..=p`, then for every other regressor
/// in ascending order its lags `1..=p` followed by its instantaneous value
/// when enabled. A regressor equal to the target only contributes own lags.
pub fn build_lag_matrix<T: Scalar>(
    panel: &TimeSeriesPanel<T>,
    target: usize,
    regressors: &[usize],
    spec: LagSpec,
) -> Result<DesignMatrix<T>> {
    build_lag_matrix_from(panel, target, regressors, spec, spec.max_lag)
}

/// As [`build_lag_matrix`] but with the first response at `first_time`
/// (which must be at least `spec.max_lag`). Used to put fits of different
/// orders on common rows.
pub fn build_lag_matrix_from<T: Scalar>(
    panel: &TimeSeriesPanel<T>,
    target: usize,
    regressors: &[usize],
    spec: LagSpec,
    first_time: usize,
) -> Result<DesignMatrix<T>> {
    let dim = panel.dim();
    let len = panel.len();
    let p = spec.max_lag;
    if target >= dim {
        return Err(Error::IndexOutOfRange { index: target, count: dim });
    }
    if let Some(&bad) = regressors.iter().find(|&&r| r >= dim) {
        return Err(Error::IndexOutOfRange { index: bad, count: dim });
    }
    if p == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    if len <= p {
        return Err(Error::SeriesTooShort { len, lag: p });
    }
    if first_time < p || first_time >= len {
        return Err(Error::InvalidArgument(format!(
            "first response time {first_time} outside {p}..{len}"
        )));
    }

    let mut others: Vec<usize> = regressors.iter().copied().filter(|&r| r != target).collect();
    others.sort_unstable();
    others.dedup();

    let mut tags: Vec<ColumnTag> = (1..=p).map(|lag| ColumnTag { series: target, lag }).collect();
    for &r in &others {
        tags.extend((1..=p).map(|lag| ColumnTag { series: r, lag }));
        if spec.include_instantaneous {
            tags.push(ColumnTag { series: r, lag: 0 });
        }
    }

    let rows = len - first_time;
    let mut data = Vec::with_capacity(rows * tags.len());
    for tag in &tags {
        let s = panel.series(tag.series);
        data.extend_from_slice(&s[first_time - tag.lag..len - tag.lag]);
    }
    let predictors = DMatrix::from_vec(rows, tags.len(), data);
    let response = DVector::from_column_slice(&panel.series(target)[first_time..]);
    Ok(DesignMatrix { predictors, response, column_tags: tags, first_time })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(cols: Vec<Vec<f64>>) -> TimeSeriesPanel<f64> {
        TimeSeriesPanel::from_columns_unnamed(cols).unwrap()
    }

    #[test]
    fn single_series_lag_one() {
        let p = panel(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let d = build_lag_matrix(&p, 0, &[], LagSpec::new(1, false)).unwrap();
        assert_eq!(d.predictors, DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]));
        assert_eq!(d.response.as_slice(), &[2.0, 3.0, 4.0]);
        assert_eq!(d.column_tags, vec![ColumnTag { series: 0, lag: 1 }]);
    }

    #[test]
    fn instantaneous_column_for_other_series() {
        // X = [1,2,3], Y = [5,6,7]; target Y.
        let p = panel(vec![vec![1.0, 2.0, 3.0], vec![5.0, 6.0, 7.0]]);
        let d = build_lag_matrix(&p, 1, &[0], LagSpec::new(1, true)).unwrap();
        assert_eq!(
            d.column_tags,
            vec![
                ColumnTag { series: 1, lag: 1 },
                ColumnTag { series: 0, lag: 1 },
                ColumnTag { series: 0, lag: 0 }
            ]
        );
        assert_eq!(d.predictors.row(0).iter().copied().collect::<Vec<_>>(), vec![5.0, 1.0, 2.0]);
        assert_eq!(d.response[0], 6.0);
    }

    #[test]
    fn target_in_regressors_gets_no_instantaneous_column() {
        let p = panel(vec![vec![1.0, 2.0, 3.0], vec![5.0, 6.0, 7.0]]);
        let d = build_lag_matrix(&p, 1, &[0, 1], LagSpec::new(1, true)).unwrap();
        assert!(!d.column_tags.contains(&ColumnTag { series: 1, lag: 0 }));
        assert_eq!(d.columns(), 3);
    }

    #[test]
    fn lag_equal_to_length_is_rejected() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]]);
        let err = build_lag_matrix(&p, 0, &[], LagSpec::new(3, false)).unwrap_err();
        assert_eq!(err, Error::SeriesTooShort { len: 3, lag: 3 });
        assert!(err.to_string().contains("series too short for lag order"));
    }

    #[test]
    fn common_rows_for_lower_orders() {
        let p = panel(vec![(0..10).map(f64::from).collect()]);
        let d = build_lag_matrix_from(&p, 0, &[], LagSpec::new(1, false), 3).unwrap();
        assert_eq!(d.rows(), 7);
        assert_eq!(d.response[0], 3.0);
        assert_eq!(d.predictors[(0, 0)], 2.0);
    }
}
