use nalgebra::{DMatrix, DVector};

use super::{Backend, FitTolerances, FittedNodeModel, ModelParameters};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<T: Scalar> {
    pub intercept: T,
    pub coefficients: DVector<T>,
}

/// Reusable least-squares solver for `y ≈ a + X b` with rank screening.
///
/// Columns are centred and scaled to unit norm before the SVD so that the
/// rank test does not depend on the units of individual series.
#[derive(Debug, Clone)]
pub(crate) struct LeastSquares<T: Scalar> {
    means: Vec<T>,
    scales: Vec<T>,
    svd: Option<nalgebra::SVD<T, nalgebra::Dyn, nalgebra::Dyn>>,
    rows: usize,
}

impl<T: Scalar> LeastSquares<T> {
    pub(crate) fn new(x: &DMatrix<T>, rank_tol: f64) -> Result<Self> {
        let (n, m) = x.shape();
        if n <= m {
            return Err(Error::InsufficientData(format!("{n} rows for {m} predictors plus intercept")));
        }
        if m == 0 {
            return Ok(Self { means: vec![], scales: vec![], svd: None, rows: n });
        }
        let nf = T::from_usize_lossy(n);
        let means: Vec<T> = (0..m).map(|j| x.column(j).sum() / nf).collect();
        let mut scales = vec![T::zero(); m];
        let mut xs = x.clone();
        for j in 0..m {
            let mut col = xs.column_mut(j);
            col.add_scalar_mut(-means[j]);
            let norm = col.norm();
            if norm <= T::zero() || !norm.is_finite() {
                return Err(Error::DegenerateDesign);
            }
            col /= norm;
            scales[j] = norm;
        }
        let svd = xs.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin < T::lit(rank_tol) * smax {
            return Err(Error::DegenerateDesign);
        }
        Ok(Self { means, scales, svd: Some(svd), rows: n })
    }

    /// Returns `(intercept, coefficients)`.
    pub(crate) fn solve(&self, y: &DVector<T>) -> Result<(T, DVector<T>)> {
        if y.len() != self.rows {
            return Err(Error::LengthMismatch(y.len(), self.rows));
        }
        let y_mean = y.sum() / T::from_usize_lossy(self.rows);
        let Some(svd) = &self.svd else {
            return Ok((y_mean, DVector::zeros(0)));
        };
        let m = self.means.len();
        let yc = y.add_scalar(-y_mean);
        let b = svd.solve(&yc, T::zero()).map_err(|_| Error::DegenerateDesign)?;
        let coefficients = DVector::from_iterator(m, (0..m).map(|j| b[j] / self.scales[j]));
        let intercept = y_mean - (0..m).fold(T::zero(), |acc, j| acc + self.means[j] * coefficients[j]);
        Ok((intercept, coefficients))
    }
}

pub(crate) fn least_squares<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    rank_tol: f64,
) -> Result<(T, DVector<T>)> {
    LeastSquares::new(x, rank_tol)?.solve(y)
}

/// Ordinary least squares with an intercept; `effective_dof = m + 1`.
pub fn fit_linear<T: Scalar>(design: &DesignMatrix<T>, tol: &FitTolerances) -> Result<FittedNodeModel<T>> {
    let (intercept, coefficients) = least_squares(&design.predictors, &design.response, tol.rank)?;
    let fitted = &design.predictors * &coefficients;
    let residuals = DVector::from_iterator(
        design.rows(),
        design.response.iter().zip(fitted.iter()).map(|(&y, &f)| y - f - intercept),
    );
    let dof = T::from_usize_lossy(design.columns() + 1);
    Ok(FittedNodeModel::from_residuals(
        Backend::Linear,
        residuals,
        dof,
        ModelParameters::Linear(LinearFit { intercept, coefficients }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnTag;

    fn design(cols: Vec<Vec<f64>>, y: Vec<f64>) -> DesignMatrix<f64> {
        let n = y.len();
        let m = cols.len();
        DesignMatrix {
            predictors: DMatrix::from_vec(n, m, cols.concat()),
            response: DVector::from_vec(y),
            column_tags: (0..m).map(|j| ColumnTag { series: j, lag: 1 }).collect(),
            first_time: 1,
        }
    }

    fn params(f: &FittedNodeModel<f64>) -> &LinearFit<f64> {
        match &f.parameters {
            ModelParameters::Linear(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn exact_linear_data() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin() * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let f = fit_linear(&design(vec![x], y), &FitTolerances::default()).unwrap();
        let p = params(&f);
        assert!((p.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(p.intercept.abs() < 1e-12);
        assert!(f.rss < 1e-20);
        assert_eq!(f.effective_dof, 2.0);
    }

    #[test]
    fn constant_response() {
        let a: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| ((i * 5) % 13) as f64).collect();
        let f = fit_linear(&design(vec![a, b], vec![4.5; 30]), &FitTolerances::default()).unwrap();
        let p = params(&f);
        assert!(p.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((p.intercept - 4.5).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_degenerate() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v + 1.0).collect();
        let err = fit_linear(&design(vec![a, b], vec![1.0; 30]), &FitTolerances::default()).unwrap_err();
        assert_eq!(err, Error::DegenerateDesign);
        assert_eq!(err.to_string(), "degenerate design");
    }

    #[test]
    fn constant_column_is_degenerate() {
        let a = vec![2.0; 10];
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(fit_linear(&design(vec![a], y), &FitTolerances::default()).unwrap_err(), Error::DegenerateDesign);
    }

    #[test]
    fn works_in_single_precision() {
        let x: Vec<f32> = (0..50).map(|i| (i as f32 * 0.3).cos()).collect();
        let y: Vec<f32> = x.iter().map(|v| 0.5 * v - 1.0).collect();
        let d = DesignMatrix {
            predictors: DMatrix::from_vec(50, 1, x),
            response: DVector::from_vec(y),
            column_tags: vec![ColumnTag { series: 0, lag: 1 }],
            first_time: 1,
        };
        let f = fit_linear(&d, &FitTolerances::default()).unwrap();
        match f.parameters {
            ModelParameters::Linear(p) => {
                assert!((p.coefficients[0] - 0.5).abs() < 1e-4);
                assert!((p.intercept + 1.0).abs() < 1e-4);
            }
            _ => unreachable!(),
        }
    }
}
