use rand::Rng;

use super::{fit, Backend, FitTolerances};
use crate::data::{build_lag_matrix_from, LagSpec, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `N·ln(RSS/N) + 2·dof`.
pub fn aic<T: Scalar>(rss: T, rows: usize, dof: T) -> T {
    let n = T::from_usize_lossy(rows);
    let floor = T::lit(f64::MIN_POSITIVE);
    n * (rss / n).max(floor).ln() + T::lit(2.0) * dof
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection<T: Scalar> {
    pub order: usize,
    /// AIC of order `p` at index `p - 1`; empty when no fits were compared.
    pub criteria: Vec<T>,
}

/// Chooses the lag order in `1..=max_order` minimising AIC.
///
/// All candidate fits use the rows available at `max_order`, so their
/// criteria are comparable; ties go to the smaller order. The GP backend
/// does not use AIC and simply returns `max_order`.
#[allow(clippy::too_many_arguments)]
pub fn select_order_aic<T: Scalar, R: Rng + ?Sized>(
    panel: &TimeSeriesPanel<T>,
    target: usize,
    regressors: &[usize],
    backend: Backend,
    max_order: usize,
    instantaneous: bool,
    tol: &FitTolerances,
    rng: &mut R,
) -> Result<OrderSelection<T>> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("maximal lag order must be at least 1".into()));
    }
    if backend == Backend::Gp || max_order == 1 {
        return Ok(OrderSelection { order: max_order, criteria: Vec::new() });
    }
    let mut criteria = Vec::with_capacity(max_order);
    let mut best = (1, T::zero());
    for p in 1..=max_order {
        let design = build_lag_matrix_from(panel, target, regressors, LagSpec::new(p, instantaneous), max_order)?;
        let fitted = fit(backend, &design, tol, rng)?;
        let score = aic(fitted.rss, design.rows(), fitted.effective_dof);
        if p == 1 || score < best.1 {
            best = (p, score);
        }
        criteria.push(score);
    }
    Ok(OrderSelection { order: best.0, criteria })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_candidate() {
        let panel = TimeSeriesPanel::from_columns_unnamed(vec![(0..20).map(|i| (i as f64).sin()).collect()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sel = select_order_aic(&panel, 0, &[], Backend::Linear, 1, false, &FitTolerances::default(), &mut rng)
            .unwrap();
        assert_eq!(sel.order, 1);
    }

    #[test]
    fn aic_formula() {
        let v: f64 = aic(50.0, 100, 3.0);
        assert!((v - (100.0 * 0.5f64.ln() + 6.0)).abs() < 1e-12);
        assert!(aic(0.0f64, 10, 1.0).is_finite());
    }
}
