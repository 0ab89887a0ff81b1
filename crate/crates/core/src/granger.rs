//! Granger-causality baselines based on nested-model F-tests.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::{build_lag_matrix, LagSpec, SummaryGraph, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::models::{fit_additive, fit_linear, FitTolerances, ModelParameters};
use crate::scalar::Scalar;

/// Outcome of one nested-model comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FTest {
    pub statistic: f64,
    pub p_value: f64,
    pub df_num: f64,
    pub df_den: f64,
    pub causes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrangerVerdict {
    /// `(cause, effect)`.
    pub pair: (usize, usize),
    pub statistic: f64,
    pub p_value: f64,
    pub causes: bool,
}

impl GrangerVerdict {
    fn new(pair: (usize, usize), t: FTest) -> Self {
        Self { pair, statistic: t.statistic, p_value: t.p_value, causes: t.causes }
    }
}

/// `((rss_r - rss_f) / (p_f - p_r)) / (rss_f / (n - p_f))` against
/// `F(p_f - p_r, n - p_f)`.
///
/// Differences `rss_r - rss_f` that are negative only by rounding are
/// treated as zero.
pub fn granger_f_test(rss_restr: f64, rss_full: f64, p_restr: f64, p_full: f64, n: usize, alpha: f64) -> Result<FTest> {
    let nf = n as f64;
    if !(rss_full >= 0.0 && rss_restr.is_finite() && rss_full.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid residual sums {rss_restr}, {rss_full}")));
    }
    if !(p_full > p_restr) || !(nf > p_full) {
        return Err(Error::InvalidArgument(format!(
            "need p_full > p_restr and N > p_full (got {p_full}, {p_restr}, {n})"
        )));
    }
    let mut diff = rss_restr - rss_full;
    if diff < 0.0 {
        if diff < -1e-9 * rss_restr.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!("restricted RSS {rss_restr} below full RSS {rss_full}")));
        }
        diff = 0.0;
    }
    let df_num = p_full - p_restr;
    let df_den = nf - p_full;
    let statistic = if diff == 0.0 {
        0.0
    } else if rss_full == 0.0 {
        f64::INFINITY
    } else {
        (diff / df_num) / (rss_full / df_den)
    };
    let p_value = if statistic == 0.0 {
        1.0
    } else if statistic.is_infinite() {
        0.0
    } else {
        let f = FisherSnedecor::new(df_num, df_den).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        f.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(FTest { statistic, p_value, df_num, df_den, causes: p_value < alpha })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrangerConfig {
    pub max_lag: usize,
    pub alpha: f64,
    pub tolerances: FitTolerances,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        Self { max_lag: 2, alpha: 0.05, tolerances: FitTolerances::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrangerReport {
    pub graph: SummaryGraph,
    pub verdicts: Vec<GrangerVerdict>,
    /// Pairs whose fits failed; reported without an edge.
    pub failed: Vec<((usize, usize), String)>,
}

/// Multivariate linear Granger causality: `j -> i` when removing the lags of
/// `j` from the full VAR equation of `i` significantly worsens the fit. No
/// instantaneous terms; intercepts included.
pub fn granger_linear<T: Scalar>(panel: &TimeSeriesPanel<T>, config: &GrangerConfig) -> Result<GrangerReport> {
    let d = panel.dim();
    let p = config.max_lag;
    if p == 0 {
        return Err(Error::InvalidArgument("max_lag must be at least 1".into()));
    }
    let p_full = (d * p + 1) as f64;
    let p_restr = ((d - 1) * p + 1) as f64;
    let results: Vec<(usize, usize, Result<FTest>)> = (0..d)
        .into_par_iter()
        .flat_map_iter(|i| {
            let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
            let full = build_lag_matrix(panel, i, &others, LagSpec::new(p, false))
                .and_then(|design| fit_linear(&design, &config.tolerances).map(|f| (design, f)));
            others
                .into_iter()
                .map(|j| {
                    let t = full.as_ref().map_err(Clone::clone).and_then(|(design, f)| {
                        let restricted = design.filter_columns(|tag| tag.series != j);
                        let r = fit_linear(&restricted, &config.tolerances)?;
                        granger_f_test(
                            r.rss.to_f64_lossy(),
                            f.rss.to_f64_lossy(),
                            p_restr,
                            p_full,
                            design.rows(),
                            config.alpha,
                        )
                    });
                    (j, i, t)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    collect_report(d, results)
}

fn collect_report(d: usize, results: Vec<(usize, usize, Result<FTest>)>) -> Result<GrangerReport> {
    let mut graph = SummaryGraph::new(d);
    let mut verdicts = Vec::new();
    let mut failed = Vec::new();
    for (j, i, t) in results {
        match t {
            Ok(t) => {
                if t.causes {
                    graph.add_edge(j, i)?;
                }
                verdicts.push(GrangerVerdict::new((j, i), t));
            }
            Err(e) => failed.push(((j, i), e.to_string())),
        }
    }
    verdicts.sort_by_key(|v| v.pair);
    failed.sort_by_key(|f| f.0);
    Ok(GrangerReport { graph, verdicts, failed })
}

/// Excess over one effective dof above which a smoother counts as non-linear.
const BENT_DOF: f64 = 0.01;

fn one_direction<T: Scalar>(
    panel: &TimeSeriesPanel<T>,
    cause: usize,
    effect: usize,
    p: usize,
    alpha: f64,
    tol: &FitTolerances,
) -> Result<FTest> {
    let design = build_lag_matrix(panel, effect, &[cause], LagSpec::new(p, false))?;
    let full = fit_additive(&design, tol)?;
    let restricted = fit_additive(&design.filter_columns(|tag| tag.series != cause), tol)?;
    let (rss_f, rss_r) = (full.rss.to_f64_lossy(), restricted.rss.to_f64_lossy());
    let dof_f = full.effective_dof.to_f64_lossy();
    // Degrees of freedom spent on the cause inside the full fit: a smoother
    // that stayed linear counts its effective dof, one that bent counts its
    // whole unpenalised dimension.
    let cause_dof: f64 = match &full.parameters {
        ModelParameters::Additive(a) => design
            .column_tags
            .iter()
            .enumerate()
            .filter(|(_, tag)| tag.series == cause)
            .map(|(j, _)| {
                let edf = a.component_dof[j].to_f64_lossy();
                if edf > 1.0 + BENT_DOF { a.component_basis_dof[j] as f64 } else { edf }
            })
            .sum(),
        _ => 0.0,
    };
    if cause_dof <= 0.0 || rss_r <= rss_f {
        return Ok(FTest {
            statistic: 0.0,
            p_value: 1.0,
            df_num: cause_dof.max(0.0),
            df_den: design.rows() as f64 - dof_f,
            causes: false,
        });
    }
    granger_f_test(rss_r, rss_f, dof_f - cause_dof, dof_f, design.rows(), alpha)
}

/// Pairwise nonlinear Granger test with additive spline models. Returns the
/// verdicts for `x -> y` and `y -> x`. `p_restr` is the effective dof of the
/// full fit without the cause's smoothers; `p_full` adds the dof the cause
/// spent (its whole basis dimension once a smoother leaves the linear fit).
pub fn granger_nonlinear_pairwise<T: Scalar>(
    x: &[T],
    y: &[T],
    p: usize,
    alpha: f64,
) -> Result<(GrangerVerdict, GrangerVerdict)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let panel = TimeSeriesPanel::from_columns_unnamed(vec![x.to_vec(), y.to_vec()])?;
    let tol = FitTolerances::default();
    let xy = one_direction(&panel, 0, 1, p, alpha, &tol)?;
    let yx = one_direction(&panel, 1, 0, p, alpha, &tol)?;
    Ok((GrangerVerdict::new((0, 1), xy), GrangerVerdict::new((1, 0), yx)))
}

/// Runs the pairwise nonlinear test on every unordered pair of series and
/// collects the edges into one graph.
pub fn granger_nonlinear_all_pairs<T: Scalar>(
    panel: &TimeSeriesPanel<T>,
    config: &GrangerConfig,
) -> Result<GrangerReport> {
    let d = panel.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let results: Vec<(usize, usize, Result<FTest>)> = pairs
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let sub = panel.select(&[i, j]);
            let run = |c: usize, e: usize| {
                sub.as_ref()
                    .map_err(Clone::clone)
                    .and_then(|s| one_direction(s, c, e, config.max_lag, config.alpha, &config.tolerances))
            };
            vec![(i, j, run(0, 1)), (j, i, run(1, 0))]
        })
        .collect();
    collect_report(d, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect()
    }

    #[test]
    fn no_improvement_gives_zero() {
        let t = granger_f_test(10.0, 10.0, 3.0, 5.0, 100, 0.05).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert!(!t.causes);
    }

    #[test]
    fn direct_formula_fixture() {
        // ((2 - 1) / 2) / (1 / 100) = 50.
        let t = granger_f_test(2.0, 1.0, 3.0, 5.0, 105, 0.05).unwrap();
        assert!((t.statistic - 50.0).abs() < 1e-12);
        assert!(t.p_value < 1e-15);
        assert_eq!((t.df_num, t.df_den), (2.0, 100.0));
    }

    #[test]
    fn tiny_negative_clamped_large_rejected() {
        assert_eq!(granger_f_test(1.0 - 1e-14, 1.0, 1.0, 2.0, 50, 0.05).unwrap().statistic, 0.0);
        assert!(granger_f_test(0.5, 1.0, 1.0, 2.0, 50, 0.05).is_err());
        assert!(granger_f_test(2.0, 1.0, 2.0, 2.0, 50, 0.05).is_err());
        assert!(granger_f_test(2.0, 1.0, 1.0, 2.0, 2, 0.05).is_err());
    }

    #[test]
    fn linear_detects_lagged_driver() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e1 = noise(400, &mut rng);
        let e2 = noise(400, &mut rng);
        let mut x = vec![0.0; 400];
        let mut y = vec![0.0; 400];
        for t in 1..400 {
            x[t] = 0.5 * x[t - 1] + e1[t];
            y[t] = 0.3 * y[t - 1] + 0.7 * x[t - 1] + e2[t];
        }
        let panel = TimeSeriesPanel::from_columns_unnamed(vec![x, y]).unwrap();
        let r = granger_linear(&panel, &GrangerConfig::default()).unwrap();
        assert!(r.graph.has_edge(0, 1));
        assert!(!r.graph.has_edge(1, 0));
        assert_eq!(r.verdicts.len(), 2);
    }

    #[test]
    fn singular_pair_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = noise(100, &mut rng);
        let panel = TimeSeriesPanel::from_columns_unnamed(vec![x.clone(), x]).unwrap();
        let r = granger_linear(&panel, &GrangerConfig::default()).unwrap();
        assert_eq!(r.failed.len(), 2);
        assert_eq!(r.graph.edge_count(), 0);
    }

    #[test]
    fn nonlinear_detects_quadratic_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e1 = noise(400, &mut rng);
        let e2 = noise(400, &mut rng);
        let mut x = vec![0.0; 400];
        let mut y = vec![0.0; 400];
        for t in 1..400 {
            x[t] = -0.5 * x[t - 1] + 0.4 * e1[t];
            y[t] = -0.5 * y[t - 1] + 3.0 * x[t - 1] * x[t - 1] + 0.4 * e2[t];
        }
        let (xy, _) = granger_nonlinear_pairwise(&x, &y, 1, 0.05).unwrap();
        assert!(xy.causes);
    }
}
