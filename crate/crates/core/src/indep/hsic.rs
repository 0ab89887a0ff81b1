use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

use super::kernel::GaussianGram;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How to turn an HSIC statistic into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HsicPValue {
    /// Moment-matched gamma approximation of the null distribution of `n·HSIC`.
    #[default]
    Gamma,
    /// Permutation test with the given number of permutations.
    Permutation(usize),
}


pub const DEFAULT_PERMUTATIONS: usize = 500;

/// Aligned sub-blocks of two Gram matrices: rows/columns
/// `a0..a0+n` of `k` paired with `b0..b0+n` of `l`.
pub(crate) struct Window<'a, T: Scalar> {
    pub k: &'a GaussianGram<T>,
    pub a0: usize,
    pub l: &'a GaussianGram<T>,
    pub b0: usize,
    pub n: usize,
}

struct Moments<T: Scalar> {
    row_k: Vec<T>,
    row_l: Vec<T>,
    sum_k: T,
    sum_l: T,
    diag_k: T,
    diag_l: T,
}

impl<T: Scalar> Window<'_, T> {
    fn moments(&self) -> Moments<T> {
        let n = self.n;
        let mut row_k = vec![T::zero(); n];
        let mut row_l = vec![T::zero(); n];
        let (mut diag_k, mut diag_l) = (T::zero(), T::zero());
        for i in 0..n {
            let (ka, lb) = (self.a0 + i, self.b0 + i);
            // Windows covering most of a row: subtract the few columns outside.
            row_k[i] = if 2 * n > self.k.len() {
                self.k.window_row_sum(ka, self.a0, n)
            } else {
                fast_sum(&self.k.row(ka)[self.a0..self.a0 + n])
            };
            row_l[i] = if 2 * n > self.l.len() {
                self.l.window_row_sum(lb, self.b0, n)
            } else {
                fast_sum(&self.l.row(lb)[self.b0..self.b0 + n])
            };
            diag_k += self.k.row(ka)[ka];
            diag_l += self.l.row(lb)[lb];
        }
        let sum_k = row_k.iter().fold(T::zero(), |a, &v| a + v);
        let sum_l = row_l.iter().fold(T::zero(), |a, &v| a + v);
        Moments { row_k, row_l, sum_k, sum_l, diag_k, diag_l }
    }

    /// Biased statistic `(1/n²) tr(K H L H)` for the pairing `i ↔ perm[i]`
    /// (identity when `perm` is `None`).
    fn statistic_with(&self, m: &Moments<T>, perm: Option<&[usize]>) -> T {
        let n = self.n;
        let nf = T::from_usize_lossy(n);
        let mut cross = T::zero();
        let mut rows = T::zero();
        for i in 0..n {
            let kr = &self.k.row(self.a0 + i)[self.a0..self.a0 + n];
            match perm {
                None => {
                    let lr = &self.l.row(self.b0 + i)[self.b0..self.b0 + n];
                    cross += kr.iter().zip(lr).fold(T::zero(), |a, (&x, &y)| a + x * y);
                    rows += m.row_k[i] * m.row_l[i];
                }
                Some(p) => {
                    let lr = self.l.row(self.b0 + p[i]);
                    let mut s = T::zero();
                    for (j, &kv) in kr.iter().enumerate() {
                        s += kv * lr[self.b0 + p[j]];
                    }
                    cross += s;
                    rows += m.row_k[i] * m.row_l[p[i]];
                }
            }
        }
        let stat = (cross - T::lit(2.0) * rows / nf + m.sum_k * m.sum_l / (nf * nf)) / (nf * nf);
        stat.max(T::zero())
    }

    pub fn statistic(&self) -> T {
        let m = self.moments();
        self.statistic_with(&m, None)
    }

    /// Gamma-approximation p-value for the statistic of this window.
    pub fn gamma_pvalue(&self) -> (T, f64) {
        let n = self.n;
        let m = self.moments();
        let nf = T::from_usize_lossy(n);
        let mkk = m.sum_k / (nf * nf);
        let mll = m.sum_l / (nf * nf);
        let u: Vec<T> = m.row_k.iter().map(|&r| r / nf).collect();
        let v: Vec<T> = m.row_l.iter().map(|&r| r / nf).collect();
        // With K̃ = HKH and L̃ = HLH: the statistic is Σ K̃_ij L̃_ij / n² and the
        // variance needs Σ_{i≠j} (K̃_ij L̃_ij)².
        let (mut total, mut acc) = (T::zero(), T::zero());
        for i in 0..n {
            let kr = &self.k.row(self.a0 + i)[self.a0..self.a0 + n];
            let lr = &self.l.row(self.b0 + i)[self.b0..self.b0 + n];
            let (alpha, beta) = (mkk - u[i], mll - v[i]);
            let (s1, s2) = centred_products(kr, lr, &u, &v, alpha, beta);
            let wd = (kr[i] - u[i] + alpha) * (lr[i] - v[i] + beta);
            total += s1;
            acc += s2 - wd * wd;
        }
        let stat = (total / (nf * nf)).max(T::zero());
        let nn = n as f64;
        let var = acc.to_f64_lossy() / 36.0 / (nn * (nn - 1.0)) * 72.0 * (nn - 4.0) * (nn - 5.0)
            / (nn * (nn - 1.0) * (nn - 2.0) * (nn - 3.0));
        let mu_x = (m.sum_k - m.diag_k).to_f64_lossy() / (nn * (nn - 1.0));
        let mu_y = (m.sum_l - m.diag_l).to_f64_lossy() / (nn * (nn - 1.0));
        let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / nn;
        let s = stat.to_f64_lossy();
        if !(var > 0.0 && mean > 0.0) || !var.is_finite() {
            // A constant argument: the centred Gram matrix vanishes.
            return (stat, 1.0);
        }
        let (loc, shape, scale) = shifted_gamma(nn * mean, nn * nn * var, self.k.shape(), self.l.shape());
        let x = nn * s - loc;
        let p = if x <= 0.0 { 1.0 } else { Gamma::new(shape, 1.0 / scale).map_or(1.0, |g| g.sf(x)) };
        (stat, p.clamp(0.0, 1.0))
    }

    /// `(1 + #{perm stat >= observed}) / (1 + permutations)`.
    pub fn permutation_pvalue<R: Rng + ?Sized>(&self, permutations: usize, rng: &mut R) -> (T, f64) {
        let m = self.moments();
        let stat = self.statistic_with(&m, None);
        let mut perm: Vec<usize> = (0..self.n).collect();
        // Guard against accumulation-order noise in exact ties.
        let threshold = stat - stat.abs() * T::lit(1e-12);
        let mut exceed = 0usize;
        for _ in 0..permutations {
            perm.shuffle(rng);
            if self.statistic_with(&m, Some(&perm)) >= threshold {
                exceed += 1;
            }
        }
        (stat, (1 + exceed) as f64 / (1 + permutations) as f64)
    }
}

/// Location, shape and scale of the gamma law shifted to match `mean`,
/// `var` and the skewness `2√2·ρ_K·ρ_L` of the asymptotic null
/// `Σ λ_i μ_j z_ij²`. Without usable spectral shapes this is the plain
/// two-moment gamma.
fn shifted_gamma(mean: f64, var: f64, rho_k: f64, rho_l: f64) -> (f64, f64, f64) {
    let skew = 2.0 * std::f64::consts::SQRT_2 * rho_k * rho_l;
    if skew.is_finite() && skew > 0.0 {
        let shape = 4.0 / (skew * skew);
        let scale = var.sqrt() * skew / 2.0;
        (mean - shape * scale, shape, scale)
    } else {
        (0.0, mean * mean / var, var / mean)
    }
}

/// `(Σ w_j, Σ w_j²)` with `w_j = (k_j - u_j + alpha)(l_j - v_j + beta)`.
#[inline]
fn centred_products<T: Scalar>(k: &[T], l: &[T], u: &[T], v: &[T], alpha: T, beta: T) -> (T, T) {
    const LANES: usize = 8;
    let mut s1 = [T::zero(); LANES];
    let mut s2 = [T::zero(); LANES];
    let n = k.len();
    let split = n - n % LANES;
    for c in (0..split).step_by(LANES) {
        for j in 0..LANES {
            let w = (k[c + j] - u[c + j] + alpha) * (l[c + j] - v[c + j] + beta);
            s1[j] += w;
            s2[j] += w * w;
        }
    }
    let (mut a, mut b) = (T::zero(), T::zero());
    for j in split..n {
        let w = (k[j] - u[j] + alpha) * (l[j] - v[j] + beta);
        a += w;
        b += w * w;
    }
    for j in 0..LANES {
        a += s1[j];
        b += s2[j];
    }
    (a, b)
}

/// Sum with independent partial accumulators.
#[inline]
fn fast_sum<T: Scalar>(x: &[T]) -> T {
    const LANES: usize = 8;
    let mut s = [T::zero(); LANES];
    let split = x.len() - x.len() % LANES;
    for c in (0..split).step_by(LANES) {
        for j in 0..LANES {
            s[j] += x[c + j];
        }
    }
    let mut a = x[split..].iter().fold(T::zero(), |a, &v| a + v);
    for v in s {
        a += v;
    }
    a
}

fn grams<T: Scalar>(x: &[T], y: &[T]) -> Result<(GaussianGram<T>, GaussianGram<T>)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 4 {
        return Err(Error::InsufficientData(format!("HSIC needs at least 4 samples, got {}", x.len())));
    }
    Ok((GaussianGram::new(x)?, GaussianGram::new(y)?))
}

/// Biased HSIC estimate `(1/n²) tr(K H L H)` with Gaussian kernels whose
/// bandwidths follow the median heuristic on each argument.
pub fn hsic_statistic<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let (k, l) = grams(x, y)?;
    Ok(Window { k: &k, a0: 0, l: &l, b0: 0, n: x.len() }.statistic())
}

/// p-value of the HSIC independence test between `x` and `y`.
pub fn hsic_pvalue<T: Scalar, R: Rng + ?Sized>(x: &[T], y: &[T], method: HsicPValue, rng: &mut R) -> Result<f64> {
    let (k, l) = grams(x, y)?;
    let w = Window { k: &k, a0: 0, l: &l, b0: 0, n: x.len() };
    match method {
        HsicPValue::Gamma => {
            if x.len() < 20 {
                return Err(Error::InsufficientData("gamma approximation needs at least 20 samples".into()));
            }
            Ok(w.gamma_pvalue().1)
        }
        HsicPValue::Permutation(perms) => Ok(w.permutation_pvalue(perms, rng).1),
    }
}
