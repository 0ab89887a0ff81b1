//! Independence tests between a residual series and candidate cause series.
//!
//! Both HSIC and cross-correlation treat the aligned pairs as i.i.d.; the
//! serial dependence of the inputs is ignored.

mod hsic;
mod kernel;
mod shifted;

pub use hsic::{hsic_pvalue, hsic_statistic, HsicPValue, DEFAULT_PERMUTATIONS};
pub use kernel::{median_bandwidth, GaussianGram, BANDWIDTH_SUBSAMPLE};
pub use shifted::{
    cross_correlation_test, shift_bound_for_order, shifted_independence_test, shifted_test_prepared,
    IndependenceVerdict, PairTest, PreparedSeries, ShiftRange, ShiftedTestOptions, MIN_OVERLAP, MIN_SHIFT,
};
