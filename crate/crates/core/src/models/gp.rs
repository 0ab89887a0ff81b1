use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::Rng;

use super::{Backend, FitTolerances, FittedNodeModel, ModelParameters};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Squared-exponential kernel `s² exp(-|x - x'|² / (2 l²))` plus i.i.d.
/// Gaussian noise of variance `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPHyperparams<T: Scalar> {
    pub signal_variance: T,
    /// Shared by all inputs, which are standardized before fitting.
    pub length_scale: T,
    pub noise_variance: T,
}

impl<T: Scalar> GPHyperparams<T> {
    fn from_log(v: [T; 3]) -> Self {
        Self { signal_variance: v[0].exp(), length_scale: v[1].exp(), noise_variance: v[2].exp() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpFit<T: Scalar> {
    /// Optimized hyperparameters on the standardized response.
    pub hyper: GPHyperparams<T>,
    pub log_marginal_likelihood: T,
    /// Each restart's initial hyperparameters and their log marginal likelihood.
    pub starts: Vec<(GPHyperparams<T>, T)>,
    /// Design rows the hyperparameters were optimized on.
    pub hyper_rows: usize,
    /// Design rows the posterior was conditioned on.
    pub posterior_rows: usize,
    /// Diagonal jitter that was needed for the final factorization.
    pub jitter: T,
}

// Box constraints on the log-hyperparameters (standardized data).
const LOG_BOUNDS: [(f64, f64); 3] = [(-7.0, 5.0), (-4.0, 5.0), (-13.8, 1.5)];

fn sq_dists<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let mut s = T::zero();
            for c in 0..x.ncols() {
                let v = x[(i, c)] - x[(j, c)];
                s += v * v;
            }
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

/// Cholesky factorization, escalating diagonal jitter by decades from
/// `1e-10·scale` up to `max_jitter·scale`.
pub(crate) fn cholesky_with_jitter<T: Scalar>(
    k: &DMatrix<T>,
    scale: T,
    max_jitter: f64,
) -> Result<(Cholesky<T, Dyn>, T)> {
    if let Some(c) = k.clone().cholesky() {
        return Ok((c, T::zero()));
    }
    let mut rel = 1e-10;
    while rel <= max_jitter * (1.0 + 1e-9) {
        let jitter = T::lit(rel) * scale;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::KernelNotPositiveDefinite)
}

struct Objective<'a, T: Scalar> {
    d2: &'a DMatrix<T>,
    y: &'a DVector<T>,
    max_jitter: f64,
}

struct Evaluation<T: Scalar> {
    value: T,
    grad: [T; 3],
}

impl<T: Scalar> Objective<'_, T> {
    fn kernel(&self, h: &GPHyperparams<T>) -> DMatrix<T> {
        let inv = T::lit(-0.5) / (h.length_scale * h.length_scale);
        let mut k = self.d2.map(|d| h.signal_variance * (d * inv).exp());
        for i in 0..k.nrows() {
            k[(i, i)] += h.noise_variance;
        }
        k
    }

    fn value(&self, h: &GPHyperparams<T>) -> Result<T> {
        let k = self.kernel(h);
        let (chol, _) = cholesky_with_jitter(&k, h.signal_variance + h.noise_variance, self.max_jitter)?;
        Ok(lml_from_cholesky(&chol, self.y))
    }

    fn evaluate(&self, logp: [T; 3]) -> Option<Evaluation<T>> {
        let h = GPHyperparams::from_log(logp);
        let k = self.kernel(&h);
        let (chol, _) = cholesky_with_jitter(&k, h.signal_variance + h.noise_variance, self.max_jitter).ok()?;
        let value = lml_from_cholesky(&chol, self.y);
        let alpha = chol.solve(self.y);
        let kinv = chol.inverse();
        let n = self.y.len();
        let inv_l2 = T::one() / (h.length_scale * h.length_scale);
        let (mut g_sf, mut g_ell, mut g_sn) = (T::zero(), T::zero(), T::zero());
        for j in 0..n {
            for i in 0..n {
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                let kf = if i == j { k[(i, j)] - h.noise_variance } else { k[(i, j)] };
                g_sf += w * kf;
                g_ell += w * kf * self.d2[(i, j)] * inv_l2;
                if i == j {
                    g_sn += w;
                }
            }
        }
        let half = T::lit(0.5);
        let grad = [half * g_sf, half * g_ell, half * g_sn * h.noise_variance];
        (value.is_finite()).then_some(Evaluation { value, grad })
    }
}

fn lml_from_cholesky<T: Scalar>(chol: &Cholesky<T, Dyn>, y: &DVector<T>) -> T {
    let alpha = chol.solve(y);
    let logdet_half = chol.l_dirty().diagonal().iter().fold(T::zero(), |acc, &d| acc + d.ln());
    let n = T::from_usize_lossy(y.len());
    -T::lit(0.5) * y.dot(&alpha) - logdet_half - n * T::lit(0.5) * T::two_pi().ln()
}

/// Log marginal likelihood of a zero-mean GP on inputs `x` (rows are points).
pub fn gp_log_marginal_likelihood<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    hyper: &GPHyperparams<T>,
    max_jitter: f64,
) -> Result<T> {
    let d2 = sq_dists(x);
    Objective { d2: &d2, y, max_jitter }.value(hyper)
}

fn clamp_log<T: Scalar>(mut v: [T; 3]) -> [T; 3] {
    for (x, &(lo, hi)) in v.iter_mut().zip(LOG_BOUNDS.iter()) {
        *x = x.clamp(T::lit(lo), T::lit(hi));
    }
    v
}

/// Quasi-Newton (BFGS) ascent in log-hyperparameter space with Armijo
/// backtracking. Never returns a point worse than `start`.
fn maximize<T: Scalar>(obj: &Objective<'_, T>, start: [T; 3], max_iter: usize) -> Option<([T; 3], T)> {
    let mut x = clamp_log(start);
    let mut cur = obj.evaluate(x)?;
    let mut h = DMatrix::<T>::identity(3, 3);
    for _ in 0..max_iter {
        let g = DVector::from_row_slice(&cur.grad);
        let mut dir = &h * &g;
        if dir.dot(&g) <= T::zero() {
            h = DMatrix::identity(3, 3);
            dir = g.clone();
        }
        let longest = dir.amax();
        if longest > T::lit(2.0) {
            dir *= T::lit(2.0) / longest;
        }
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..25 {
            let cand = clamp_log([x[0] + step * dir[0], x[1] + step * dir[1], x[2] + step * dir[2]]);
            let moved: T = (0..3).fold(T::zero(), |acc, i| acc + g[i] * (cand[i] - x[i]));
            if let Some(e) = obj.evaluate(cand) {
                if e.value >= cur.value + T::lit(1e-4) * moved && e.value >= cur.value {
                    accepted = Some((cand, e));
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        let Some((nx, next)) = accepted else { break };
        let s = DVector::from_iterator(3, (0..3).map(|i| nx[i] - x[i]));
        // Minimization form: y = ∇(-f)_{new} - ∇(-f)_{old}.
        let yv = DVector::from_iterator(3, (0..3).map(|i| cur.grad[i] - next.grad[i]));
        let sy = s.dot(&yv);
        let improvement = next.value - cur.value;
        x = nx;
        cur = next;
        if sy > T::lit(1e-12) {
            let rho = T::one() / sy;
            let i3 = DMatrix::<T>::identity(3, 3);
            let a = &i3 - (&s * yv.transpose()) * rho;
            let b = &i3 - (&yv * s.transpose()) * rho;
            h = &a * &h * &b + (&s * s.transpose()) * rho;
        }
        let gmax = cur.grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if gmax < T::lit(1e-5) || improvement.abs() < T::lit(1e-9) * (T::one() + cur.value.abs()) {
            break;
        }
    }
    Some((x, cur.value))
}

/// Zero-mean GP regression with hyperparameters chosen by maximizing the
/// log marginal likelihood from `tol.gp_restarts` starting points.
///
/// Inputs are standardized per column and the response is centred and scaled;
/// residuals are reported in the response's units. Hyperparameters are
/// optimized on a uniform subsample of at most `tol.gp_max_rows` rows; the
/// posterior is then conditioned on at most `tol.gp_posterior_max_rows` rows
/// (all of them when the design is that short) and its mean evaluated at
/// every row. `effective_dof` is the trace of the smoother
/// `K (K + σ² I)^{-1}` on the conditioning rows.
pub fn fit_gp<T: Scalar, R: Rng + ?Sized>(
    design: &DesignMatrix<T>,
    tol: &FitTolerances,
    rng: &mut R,
) -> Result<FittedNodeModel<T>> {
    let n = design.rows();
    let m = design.columns();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} rows for GP regression")));
    }
    let mut x = design.predictors.clone();
    for j in 0..m {
        let col: Vec<T> = x.column(j).iter().copied().collect();
        let mu = scalar::mean(&col);
        let sd = scalar::variance(&col).sqrt();
        let sd = if sd > T::zero() { sd } else { T::one() };
        x.column_mut(j).apply(|v| *v = (*v - mu) / sd);
    }
    let y_mean = scalar::mean(design.response.as_slice());
    let y_sd = {
        let v = scalar::variance(design.response.as_slice()).sqrt();
        if v > T::zero() { v } else { T::one() }
    };
    let y = design.response.map(|v| (v - y_mean) / y_sd);

    let rows: Vec<usize> = if n > tol.gp_max_rows {
        let mut idx = sample(rng, n, tol.gp_max_rows).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let xs = x.select_rows(rows.iter());
    let ys = y.select_rows(rows.iter());
    let d2 = sq_dists(&xs);
    let obj = Objective { d2: &d2, y: &ys, max_jitter: tol.max_jitter };

    let base_ell = T::from_usize_lossy(m.max(1)).sqrt().ln();
    let mut starts = Vec::with_capacity(tol.gp_restarts.max(1));
    for r in 0..tol.gp_restarts.max(1) {
        let v = if r == 0 {
            [T::zero(), base_ell, T::lit(0.1).ln()]
        } else {
            [
                T::lit(rng.random_range(-1.0..1.0)),
                base_ell + T::lit(rng.random_range(-1.0..1.0)),
                T::lit(rng.random_range(0.01f64.ln()..0.5f64.ln())),
            ]
        };
        starts.push(clamp_log(v));
    }

    let mut start_values = Vec::with_capacity(starts.len());
    let mut best: Option<([T; 3], T)> = None;
    for s in &starts {
        let h0 = GPHyperparams::from_log(*s);
        let v0 = obj.value(&h0).unwrap_or(T::lit(f64::NEG_INFINITY));
        start_values.push((h0, v0));
        if let Some((p, v)) = maximize(&obj, *s, tol.gp_max_iter) {
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((p, v));
            }
        }
    }
    let (logp, lml) = best.ok_or(Error::KernelNotPositiveDefinite)?;
    let hyper = GPHyperparams::from_log(logp);

    let hyper_rows = rows.len();
    let rows: Vec<usize> = if n <= tol.gp_posterior_max_rows {
        (0..n).collect()
    } else if tol.gp_posterior_max_rows > hyper_rows {
        let mut idx = sample(rng, n, tol.gp_posterior_max_rows).into_vec();
        idx.sort_unstable();
        idx
    } else {
        rows
    };
    let d2 = if rows.len() == hyper_rows { d2 } else { sq_dists(&x.select_rows(rows.iter())) };
    let ys = y.select_rows(rows.iter());
    let obj = Objective { d2: &d2, y: &ys, max_jitter: tol.max_jitter };
    let k = obj.kernel(&hyper);
    let (chol, jitter) = cholesky_with_jitter(&k, hyper.signal_variance + hyper.noise_variance, tol.max_jitter)?;
    let alpha = chol.solve(&ys);
    let inv_l2 = T::lit(-0.5) / (hyper.length_scale * hyper.length_scale);
    let mut residuals = DVector::<T>::zeros(n);
    for i in 0..n {
        let mut mean = T::zero();
        for (a, &r) in rows.iter().enumerate() {
            let mut s = T::zero();
            for c in 0..m {
                let v = x[(i, c)] - x[(r, c)];
                s += v * v;
            }
            mean += hyper.signal_variance * (s * inv_l2).exp() * alpha[a];
        }
        residuals[i] = (y[i] - mean) * y_sd;
    }
    // tr(K_f (K_f + σ²I)^{-1}) = n - σ² tr((K_f + σ²I)^{-1})
    // tr(A^{-1}) = ||L^{-1}||_F^2
    let l_inv = chol
        .l_dirty()
        .solve_lower_triangular(&DMatrix::identity(rows.len(), rows.len()))
        .ok_or(Error::KernelNotPositiveDefinite)?;
    let kinv_trace = (0..rows.len()).map(|j| l_inv.view((j, j), (rows.len() - j, 1)).norm_squared()).fold(T::zero(), |a, b| a + b);
    let ns = T::from_usize_lossy(rows.len());
    let dof = (ns - (hyper.noise_variance + jitter) * kinv_trace).max(T::zero()).min(ns);

    Ok(FittedNodeModel::from_residuals(
        Backend::Gp,
        residuals,
        dof,
        ModelParameters::Gp(GpFit {
            hyper,
            log_marginal_likelihood: lml,
            starts: start_values,
            hyper_rows,
            posterior_rows: rows.len(),
            jitter,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnTag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn design(x: DMatrix<f64>, y: Vec<f64>) -> DesignMatrix<f64> {
        let m = x.ncols();
        DesignMatrix {
            predictors: x,
            response: DVector::from_vec(y),
            column_tags: (0..m).map(|j| ColumnTag { series: j, lag: 1 }).collect(),
            first_time: 1,
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: DMatrix<f64> = DMatrix::from_fn(40, 2, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(40, |i, _| (x[(i, 0)] * 1.3).sin() + 0.2 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let d2 = sq_dists(&x);
        let obj = Objective { d2: &d2, y: &y, max_jitter: 1e-4 };
        let p = [0.3, -0.2, -2.0];
        let e = obj.evaluate(p).unwrap();
        for k in 0..3 {
            let h = 1e-5;
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let fd = (obj.evaluate(a).unwrap().value - obj.evaluate(b).unwrap().value) / (2.0 * h);
            assert!((fd - e.grad[k]).abs() < 1e-5 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", e.grad[k]);
        }
    }

    #[test]
    fn jitter_rescues_singular_kernel() {
        // Duplicated points and no noise: the kernel is exactly singular.
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 1.0]);
        let k = sq_dists(&x).map(|d: f64| (-0.5 * d).exp());
        let (_, jitter) = cholesky_with_jitter(&k, 1.0, 1e-4).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-4);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky_with_jitter(&bad, 1.0, 1e-4).unwrap_err(), Error::KernelNotPositiveDefinite);
    }

    #[test]
    fn duplicated_rows_fit_without_error() {
        let base = [0.1, 0.5, -0.3, 1.2, 0.8, -1.0, 0.0, 0.4];
        let xs: Vec<f64> = base.iter().chain(base.iter()).copied().collect();
        let y: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let d = design(DMatrix::from_vec(16, 1, xs), y);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = fit_gp(&d, &FitTolerances::default(), &mut rng).unwrap();
        assert!(f.rss.is_finite());
    }

    #[test]
    fn returned_likelihood_dominates_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: DMatrix<f64> = DMatrix::from_fn(120, 2, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..120)
            .map(|i| (-(x[(i, 0)] + x[(i, 1)]).powi(2)).exp() + 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let d = design(x, y);
        let f = fit_gp(&d, &FitTolerances::default(), &mut rng).unwrap();
        let ModelParameters::Gp(gp) = &f.parameters else { unreachable!() };
        assert_eq!(gp.starts.len(), 3);
        for (_, v) in &gp.starts {
            assert!(gp.log_marginal_likelihood >= *v);
        }
        assert!(f.effective_dof > 1.0 && f.effective_dof <= 120.0);
    }

    #[test]
    fn posterior_uses_more_rows_than_hyperparameter_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: DMatrix<f64> = DMatrix::from_fn(300, 1, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..300).map(|i| x[(i, 0)].sin()).collect();
        let tol = FitTolerances { gp_max_rows: 100, gp_posterior_max_rows: 200, ..Default::default() };
        let f = fit_gp(&design(x.clone(), y.clone()), &tol, &mut rng).unwrap();
        let ModelParameters::Gp(gp) = &f.parameters else { unreachable!() };
        assert_eq!((gp.hyper_rows, gp.posterior_rows), (100, 200));
        assert_eq!(f.residuals.len(), 300);
        let tol = FitTolerances { gp_max_rows: 100, ..Default::default() };
        let f = fit_gp(&design(x, y), &tol, &mut rng).unwrap();
        let ModelParameters::Gp(gp) = &f.parameters else { unreachable!() };
        assert_eq!(gp.posterior_rows, 300);
        assert!(f.effective_dof > 1.0 && f.effective_dof <= 300.0);
    }
}
