use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};

use super::hsic::{HsicPValue, Window};
use super::kernel::GaussianGram;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::scalar::Scalar;

/// Shortest aligned overlap on which a per-shift test is run.
pub const MIN_OVERLAP: usize = 20;
/// Shifts are tested up to `±max(p, 4)` for a model of order `p`.
pub const MIN_SHIFT: usize = 4;

pub fn shift_bound_for_order(order: usize) -> usize {
    order.max(MIN_SHIFT)
}

/// Outcome of testing one pair of series over a range of time shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceVerdict {
    /// Raw p-value per shift.
    pub per_shift_pvalues: BTreeMap<i64, f64>,
    /// `min_s p_s · n_tests`, clamped to 1.
    pub min_adjusted_p: f64,
    pub reject: bool,
    /// Bonferroni factor applied to every raw p-value.
    pub n_tests: usize,
}

impl IndependenceVerdict {
    pub fn from_pvalues(per_shift_pvalues: BTreeMap<i64, f64>, n_tests: usize, alpha: f64) -> Self {
        let min_p = per_shift_pvalues.values().copied().fold(1.0f64, f64::min);
        let min_adjusted_p = (min_p * n_tests as f64).min(1.0);
        Self { per_shift_pvalues, min_adjusted_p, reject: min_adjusted_p < alpha, n_tests }
    }

    /// Shift with the smallest raw p-value.
    pub fn strongest_shift(&self) -> Option<i64> {
        self.per_shift_pvalues
            .iter()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("p-values are finite"))
            .map(|(&s, _)| s)
    }
}

/// Which shifts to test. A shift `s` pairs the first argument at time `t`
/// with the second argument at time `t - s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftRange {
    /// `-m..=m`.
    Symmetric(usize),
    /// `1..=m`: only the second argument's past (used when a residual is
    /// tested against its own series, whose present and future depend on it).
    Past(usize),
}

impl ShiftRange {
    pub fn shifts(self) -> Vec<i64> {
        match self {
            ShiftRange::Symmetric(m) => (-(m as i64)..=m as i64).collect(),
            ShiftRange::Past(m) => (1..=m as i64).collect(),
        }
    }

    pub fn count(self) -> usize {
        match self {
            ShiftRange::Symmetric(m) => 2 * m + 1,
            ShiftRange::Past(m) => m,
        }
    }
}

/// Pairwise test run at each shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairTest {
    Hsic(HsicPValue),
    /// Sample cross-correlation against its asymptotic `N(0, 1/n)` null.
    CrossCorrelation,
}

/// A series placed on the common time axis, with its Gram matrix when the
/// HSIC test will be applied to it.
#[derive(Debug, Clone)]
pub struct PreparedSeries<T: Scalar> {
    values: Vec<T>,
    start: usize,
    gram: Option<GaussianGram<T>>,
}

impl<T: Scalar> PreparedSeries<T> {
    /// `values[0]` is observed at time `start`.
    pub fn new(values: Vec<T>, start: usize, test: PairTest) -> Result<Self> {
        let gram = match test {
            PairTest::Hsic(_) => Some(GaussianGram::new(&values)?),
            PairTest::CrossCorrelation => None,
        };
        Ok(Self { values, start, gram })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn start(&self) -> usize {
        self.start
    }

    fn end(&self) -> usize {
        self.start + self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedTestOptions {
    pub shifts: ShiftRange,
    pub alpha: f64,
    pub test: PairTest,
    /// Bonferroni factor; at least the number of shifts tested.
    pub bonferroni: usize,
    /// Seed for permutation streams (split per shift).
    pub seed: u64,
}

fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let mb = b.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64_lossy() - ma, y.to_f64_lossy() - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::DegenerateInput("zero-variance input to cross-correlation".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Runs the pairwise test of `first` (at time `t`) against `second` (at time
/// `t - s`) for every shift `s`, each on the overlapping window only.
pub fn shifted_test_prepared<T: Scalar>(
    first: &PreparedSeries<T>,
    second: &PreparedSeries<T>,
    opts: &ShiftedTestOptions,
) -> Result<IndependenceVerdict> {
    let shifts = opts.shifts.shifts();
    let mut pvalues = BTreeMap::new();
    let normal = Normal::standard();
    for &s in &shifts {
        let lo = (first.start as i64).max(second.start as i64 + s);
        let hi = (first.end() as i64).min(second.end() as i64 + s);
        let n = (hi - lo).max(0) as usize;
        if n < MIN_OVERLAP {
            return Err(Error::InsufficientData(format!("overlap of {n} samples at shift {s}")));
        }
        let a0 = (lo - first.start as i64) as usize;
        let b0 = (lo - s - second.start as i64) as usize;
        let p = match opts.test {
            PairTest::CrossCorrelation => {
                let r = pearson(&first.values[a0..a0 + n], &second.values[b0..b0 + n])?;
                2.0 * normal.sf((n as f64).sqrt() * r.abs())
            }
            PairTest::Hsic(method) => {
                let (Some(k), Some(l)) = (&first.gram, &second.gram) else {
                    return Err(Error::InvalidArgument("series prepared without a Gram matrix".into()));
                };
                let w = Window { k, a0, l, b0, n };
                match method {
                    HsicPValue::Gamma => w.gamma_pvalue().1,
                    HsicPValue::Permutation(perms) => {
                        let mut rng = seeded_rng(derive_seed(opts.seed, &[s as u64]));
                        w.permutation_pvalue(perms, &mut rng).1
                    }
                }
            }
        };
        pvalues.insert(s, p);
    }
    Ok(IndependenceVerdict::from_pvalues(pvalues, opts.bonferroni.max(shifts.len()), opts.alpha))
}

/// Tests `residuals` against `series` (both starting at the same time) at
/// every shift in `-max_shift..=max_shift`, Bonferroni-correcting over the
/// shifts.
pub fn shifted_independence_test<T: Scalar>(
    residuals: &[T],
    series: &[T],
    max_shift: usize,
    alpha: f64,
    test: PairTest,
) -> Result<IndependenceVerdict> {
    let range = ShiftRange::Symmetric(max_shift);
    let opts = ShiftedTestOptions { shifts: range, alpha, test, bonferroni: range.count(), seed: 0 };
    shifted_test_prepared(
        &PreparedSeries::new(residuals.to_vec(), 0, test)?,
        &PreparedSeries::new(series.to_vec(), 0, test)?,
        &opts,
    )
}

/// Cross-correlation test of `y_t` against `x_{t-s}` for `|s| <= max_shift`.
pub fn cross_correlation_test<T: Scalar>(x: &[T], y: &[T], max_shift: usize, alpha: f64) -> Result<IndependenceVerdict> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() <= 10 * max_shift {
        return Err(Error::InsufficientData(format!(
            "{} samples for cross-correlations up to lag {max_shift}",
            x.len()
        )));
    }
    shifted_independence_test(y, x, max_shift, alpha, PairTest::CrossCorrelation)
}
