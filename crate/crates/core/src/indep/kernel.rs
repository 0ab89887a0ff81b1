use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::scalar::Scalar;

/// Inputs longer than this are subsampled for the median heuristic.
pub const BANDWIDTH_SUBSAMPLE: usize = 500;
const BANDWIDTH_SEED: u64 = 0x6d65_6469_616e;

/// Median of the pairwise distances `|x_i - x_j|` over all distinct pairs,
/// or `1` when that median is zero.
///
/// Samples longer than [`BANDWIDTH_SUBSAMPLE`] are reduced to a fixed-seed
/// random subset first, so the result is a pure function of the input.
pub fn median_bandwidth<T: Scalar>(samples: &[T]) -> Result<T> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("median bandwidth needs 2 samples, got {n}")));
    }
    let picked: Vec<T> = if n > BANDWIDTH_SUBSAMPLE {
        let mut rng = seeded_rng(BANDWIDTH_SEED ^ n as u64);
        sample(&mut rng, n, BANDWIDTH_SUBSAMPLE).iter().map(|i| samples[i]).collect()
    } else {
        samples.to_vec()
    };
    let mut dists = Vec::with_capacity(picked.len() * (picked.len() - 1) / 2);
    for i in 0..picked.len() {
        for j in 0..i {
            dists.push((picked[i] - picked[j]).abs());
        }
    }
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite distances");
    let mid = dists.len() / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, cmp);
    let median = if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(T::min_value().unwrap_or(-upper), T::max);
        (lower + upper) * T::lit(0.5)
    };
    Ok(if median > T::zero() { median } else { T::one() })
}

/// Dense Gaussian kernel matrix `exp(-(x_i - x_j)^2 / (2 σ^2))` with the
/// median-heuristic bandwidth `σ`.
#[derive(Debug, Clone)]
pub struct GaussianGram<T: Scalar> {
    n: usize,
    bandwidth: T,
    /// Row-major `n × n`.
    values: Vec<T>,
    row_sums: Vec<T>,
    shape: f64,
}

impl<T: Scalar> GaussianGram<T> {
    pub fn new(x: &[T]) -> Result<Self> {
        let bandwidth = median_bandwidth(x)?;
        Ok(Self::with_bandwidth(x, bandwidth))
    }

    pub fn with_bandwidth(x: &[T], bandwidth: T) -> Self {
        let n = x.len();
        let scale = T::lit(-0.5) / (bandwidth * bandwidth);
        let mut values = vec![T::one(); n * n];
        for i in 0..n {
            for j in 0..i {
                let d = x[i] - x[j];
                let k = (d * d * scale).exp();
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        let row_sums = values.chunks_exact(n.max(1)).map(|r| r.iter().fold(T::zero(), |a, &v| a + v)).collect();
        let mut gram = Self { n, bandwidth, values, row_sums, shape: f64::NAN };
        gram.shape = gram.spectral_shape();
        gram
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    /// `tr(C³) / tr(C²)^{3/2}` for the centred Gram matrix `C`, i.e. the
    /// normalised third power sum of its spectrum. `NaN` when `C` vanishes.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    fn spectral_shape(&self) -> f64 {
        let idx: Vec<usize> = if self.n > BANDWIDTH_SUBSAMPLE {
            let mut rng = seeded_rng(BANDWIDTH_SEED ^ self.n as u64);
            let mut v = sample(&mut rng, self.n, BANDWIDTH_SUBSAMPLE).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..self.n).collect()
        };
        let m = idx.len();
        let mut c = DMatrix::from_fn(m, m, |i, j| self.values[idx[i] * self.n + idx[j]].to_f64_lossy());
        let rows: Vec<f64> = (0..m).map(|i| c.row(i).sum() / m as f64).collect();
        let all = rows.iter().sum::<f64>() / m as f64;
        for j in 0..m {
            for i in 0..m {
                c[(i, j)] += all - rows[i] - rows[j];
            }
        }
        let c2 = &c * &c;
        let t2 = c2.trace();
        let t3 = c2.component_mul(&c).sum();
        if t2 > 0.0 {
            t3 / t2.powf(1.5)
        } else {
            f64::NAN
        }
    }

    /// Sum of row `i` over the columns `c0..c0 + len`.
    pub(crate) fn window_row_sum(&self, i: usize, c0: usize, len: usize) -> T {
        let row = self.row(i);
        let outside = row[..c0].iter().chain(&row[c0 + len..]).fold(T::zero(), |a, &v| a + v);
        self.row_sums[i] - outside
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}
