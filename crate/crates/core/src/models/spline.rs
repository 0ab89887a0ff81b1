//! Low-rank penalized cubic smoothing spline.
//!
//! A cubic B-spline basis with knots at quantiles of the distinct inputs is
//! penalized by the integrated squared second derivative. The basis is
//! diagonalised once (Demmler–Reinsch), after which fitted values, the
//! smoother trace and the GCV score cost `O(N K)` per smoothing parameter.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

const DEGREE: usize = 3;
const MAX_INTERIOR_KNOTS: usize = 16;
const GCV_GRID: usize = 41;

/// Diagonalised smoother for one predictor column.
#[derive(Debug, Clone)]
pub struct PenalizedSpline<T: Scalar> {
    /// `N × K` basis with orthonormal columns in which the penalty is diagonal.
    phi: DMatrix<T>,
    /// Penalty eigenvalues, ascending; the first two (linear functions) are zero.
    eig: Vec<T>,
}

/// Outcome of one smoothing step.
#[derive(Debug, Clone)]
pub struct SmootherFit<T: Scalar> {
    pub lambda: T,
    /// Trace of the full smoother, including its linear part (so `>= 2`).
    pub trace: T,
    /// Fitted values with the linear part removed.
    pub nonlinear: DVector<T>,
}

fn basis_row<T: Scalar>(knots: &[T], u: T, out: &mut [T], second: &mut [T]) {
    let nk = knots.len();
    // Locate the span, clamping the right end into the last non-empty interval.
    let last = nk - DEGREE - 2;
    let mut span = DEGREE;
    while span < last && u >= knots[span + 1] {
        span += 1;
    }
    // table[j][i] = N_{i,j}(u) for i in 0..nk-1-j
    let mut table: Vec<Vec<T>> = Vec::with_capacity(DEGREE + 1);
    let mut n0 = vec![T::zero(); nk - 1];
    n0[span] = T::one();
    table.push(n0);
    let ratio = |num: T, den: T| if den > T::zero() { num / den } else { T::zero() };
    for j in 1..=DEGREE {
        let prev = &table[j - 1];
        let row: Vec<T> = (0..nk - 1 - j)
            .map(|i| {
                ratio(u - knots[i], knots[i + j] - knots[i]) * prev[i]
                    + ratio(knots[i + j + 1] - u, knots[i + j + 1] - knots[i + 1]) * prev[i + 1]
            })
            .collect();
        table.push(row);
    }
    out.copy_from_slice(&table[DEGREE]);

    // First derivatives of degree-2 functions, then second derivatives of cubics.
    let d1: Vec<T> = (0..nk - 1 - 2)
        .map(|i| {
            T::lit(2.0)
                * (ratio(table[1][i], knots[i + 2] - knots[i])
                    - ratio(table[1][i + 1], knots[i + 3] - knots[i + 1]))
        })
        .collect();
    for (i, s) in second.iter_mut().enumerate() {
        *s = T::lit(3.0)
            * (ratio(d1[i], knots[i + 3] - knots[i]) - ratio(d1[i + 1], knots[i + 4] - knots[i + 1]));
    }
}

impl<T: Scalar> PenalizedSpline<T> {
    /// Builds the smoother for inputs `x`; `None` when `x` has fewer than four
    /// distinct values (such columns are treated as purely linear).
    pub fn new(x: &[T]) -> Option<Self> {
        let n = x.len();
        let mut uniq: Vec<T> = x.to_vec();
        uniq.sort_by(|a, b| a.partial_cmp(b).expect("finite inputs"));
        uniq.dedup();
        if uniq.len() < 4 {
            return None;
        }
        let lo = uniq[0];
        let width = uniq[uniq.len() - 1] - lo;
        let scaled: Vec<T> = uniq.iter().map(|&v| (v - lo) / width).collect();

        let interior = MAX_INTERIOR_KNOTS.min(uniq.len() - 4);
        let mut knots = vec![T::zero(); DEGREE + 1];
        for i in 1..=interior {
            let pos = i as f64 / (interior + 1) as f64 * (scaled.len() - 1) as f64;
            let k = pos.floor() as usize;
            let frac = T::lit(pos - k as f64);
            let v = if k + 1 < scaled.len() { scaled[k] + frac * (scaled[k + 1] - scaled[k]) } else { scaled[k] };
            knots.push(v);
        }
        knots.extend(std::iter::repeat_n(T::one(), DEGREE + 1));
        let kdim = knots.len() - DEGREE - 1;

        let mut basis = DMatrix::<T>::zeros(n, kdim);
        let mut row = vec![T::zero(); kdim];
        let mut scratch = vec![T::zero(); kdim];
        for (r, &v) in x.iter().enumerate() {
            basis_row(&knots, (v - lo) / width, &mut row, &mut scratch);
            for (c, &b) in row.iter().enumerate() {
                basis[(r, c)] = b;
            }
        }

        // Second derivatives are piecewise linear, so Simpson's rule on each
        // knot interval integrates their products exactly.
        let mut penalty = DMatrix::<T>::zeros(kdim, kdim);
        let mut d2 = [vec![T::zero(); kdim], vec![T::zero(); kdim], vec![T::zero(); kdim]];
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            // Evaluate just inside the interval so the span lookup is unambiguous.
            let eps = (b - a) * T::lit(1e-9);
            let pts = [a + eps, (a + b) * T::lit(0.5), b - eps];
            for (k, &p) in pts.iter().enumerate() {
                basis_row(&knots, p, &mut row, &mut d2[k]);
            }
            let h = (b - a) / T::lit(6.0);
            for i in 0..kdim {
                for j in i..kdim {
                    let v = h * (d2[0][i] * d2[0][j] + T::lit(4.0) * d2[1][i] * d2[1][j] + d2[2][i] * d2[2][j]);
                    penalty[(i, j)] += v;
                    if i != j {
                        penalty[(j, i)] += v;
                    }
                }
            }
        }

        let mut gram = basis.transpose() * &basis;
        let ridge = gram.trace() / T::from_usize_lossy(kdim) * T::lit(1e-10);
        for i in 0..kdim {
            gram[(i, i)] += ridge;
        }
        let chol = gram.cholesky()?;
        let l = chol.l();
        // M = L^{-1} P L^{-T}
        let linv_p = l.solve_lower_triangular(&penalty)?;
        let m = l.solve_lower_triangular(&linv_p.transpose())?;
        let m = (&m + m.transpose()) * T::lit(0.5);
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..kdim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite"));
        let u = eig.eigenvectors.select_columns(order.iter());
        let lt_inv_u = l.transpose().solve_upper_triangular(&u)?;
        let phi = basis * lt_inv_u;
        let eigvals: Vec<T> = order
            .iter()
            .enumerate()
            .map(|(k, &i)| if k < 2 { T::zero() } else { eig.eigenvalues[i].max(T::zero()) })
            .collect();
        Some(Self { phi, eig: eigvals })
    }

    /// Basis of the penalised (non-linear) directions and their penalty
    /// eigenvalues. The columns are orthonormal and orthogonal to `1` and `x`.
    pub(crate) fn nonlinear_basis(&self) -> (nalgebra::DMatrixView<'_, T>, &[T]) {
        let k = self.eig.len();
        (self.phi.columns(2, k - 2), &self.eig[2..])
    }

    pub fn basis_dim(&self) -> usize {
        self.eig.len()
    }

    fn trace(&self, lambda: T) -> T {
        self.eig.iter().fold(T::zero(), |acc, &d| acc + T::one() / (T::one() + lambda * d))
    }

    /// GCV score `N·RSS/(N − tr)^2` from the projections `z = Φᵀ r`.
    fn gcv(&self, z: &DVector<T>, outside: T, lambda: T) -> T {
        let n = T::from_usize_lossy(self.phi.nrows());
        let mut rss = outside;
        for (k, &d) in self.eig.iter().enumerate() {
            let shrink = lambda * d / (T::one() + lambda * d);
            rss += z[k] * z[k] * shrink * shrink;
        }
        let denom = n - self.trace(lambda);
        if denom <= T::zero() {
            return T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
        }
        n * rss / (denom * denom)
    }

    /// Smooths `r` at a fixed smoothing parameter.
    pub fn smooth_with(&self, r: &DVector<T>, lambda: T) -> SmootherFit<T> {
        let z = self.phi.tr_mul(r);
        self.finish(&z, lambda)
    }

    fn finish(&self, z: &DVector<T>, lambda: T) -> SmootherFit<T> {
        let mut w = DVector::<T>::zeros(self.eig.len());
        for k in 2..self.eig.len() {
            w[k] = z[k] / (T::one() + lambda * self.eig[k]);
        }
        SmootherFit { lambda, trace: self.trace(lambda), nonlinear: &self.phi * w }
    }

    /// Smooths `r` with the smoothing parameter minimising GCV.
    ///
    /// Exact GCV ties (e.g. a zero residual) resolve to the smoothest fit.
    pub fn smooth_gcv(&self, r: &DVector<T>) -> SmootherFit<T> {
        let z = self.phi.tr_mul(r);
        let outside = (r.norm_squared() - z.norm_squared()).max(T::zero());
        let dmax = self.eig.iter().copied().fold(T::zero(), T::max);
        let dmin = self.eig[2..].iter().copied().filter(|&d| d > T::zero()).fold(dmax, T::min);
        if dmax <= T::zero() {
            return self.finish(&z, T::zero());
        }
        // From an essentially interpolating fit to an essentially linear one.
        let lo = (T::lit(1e-4) / dmax).ln();
        let hi = (T::lit(1e5) / dmin).ln();
        let step = (hi - lo) / T::from_usize_lossy(GCV_GRID - 1);
        let score = |ll: T| self.gcv(&z, outside, ll.exp());
        let mut best = GCV_GRID - 1;
        let mut best_score = score(hi);
        for i in (0..GCV_GRID - 1).rev() {
            let s = score(lo + step * T::from_usize_lossy(i));
            if s < best_score {
                best = i;
                best_score = s;
            }
        }
        // Golden-section refinement within the neighbouring grid cells.
        let mut a = lo + step * T::from_usize_lossy(best.saturating_sub(1));
        let mut b = lo + step * T::from_usize_lossy((best + 1).min(GCV_GRID - 1));
        let g = T::lit(0.618_033_988_749_895);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (score(c), score(d));
        for _ in 0..30 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = score(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = score(d);
            }
        }
        let refined = (a + b) * T::lit(0.5);
        let ll = if score(refined) < best_score { refined } else { lo + step * T::from_usize_lossy(best) };
        self.finish(&z, ll.exp())
    }
}
