//! Tridiagonal kernels: Thomas solves (one-shot and pre-factored) and the
//! lowest eigenpairs of real symmetric tridiagonal matrices.

use std::ops::{Add, Div, Mul, Sub};

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;

/// Scalar types the Thomas solver works over (`f64`, `Complex64`).
pub trait Field:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Default
    + Send
    + Sync
{
    fn recip(self) -> Self;
}

impl Field for f64 {
    fn recip(self) -> Self {
        1.0 / self
    }
}

impl Field for Complex64 {
    fn recip(self) -> Self {
        self.inv()
    }
}

/// Solves `A x = rhs` in place for a tridiagonal `A` without pivoting.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (so `lower[0]` is ignored), `upper[i]`
/// multiplies `x[i+1]` (so `upper[n-1]` is ignored). `scratch` must hold `n` values.
pub fn thomas<T: Field>(lower: &[T], diag: &[T], upper: &[T], rhs: &mut [T], scratch: &mut [T]) {
    let n = rhs.len();
    debug_assert!(diag.len() == n && lower.len() == n && upper.len() == n && scratch.len() >= n);
    if n == 0 {
        return;
    }
    let mut m = diag[0];
    scratch[0] = upper[0] / m;
    rhs[0] = rhs[0] / m;
    for i in 1..n {
        m = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / m;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i] * rhs[i + 1];
    }
}

/// Same as [`thomas`] but with constant off-diagonals, which is the shape of every
/// 3-point kinetic operator on a uniform grid.
pub fn thomas_const_offdiag<T: Field>(off: T, diag: &[T], rhs: &mut [T], scratch: &mut [T]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut inv = diag[0].recip();
    scratch[0] = off * inv;
    rhs[0] = rhs[0] * inv;
    for i in 1..n {
        inv = (diag[i] - off * scratch[i - 1]).recip();
        scratch[i] = off * inv;
        rhs[i] = (rhs[i] - off * rhs[i - 1]) * inv;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i] * rhs[i + 1];
    }
}

/// LU factors of a fixed tridiagonal matrix with constant off-diagonals, reused for
/// many right-hand sides.
#[derive(Clone, Debug)]
pub struct TridiagFactor<T> {
    off: T,
    inv_pivot: Vec<T>,
    upper_mod: Vec<T>,
}

impl<T: Field> TridiagFactor<T> {
    pub fn new(off: T, diag: &[T]) -> Self {
        let n = diag.len();
        let mut inv_pivot = vec![T::default(); n];
        let mut upper_mod = vec![T::default(); n];
        let mut m = diag[0];
        inv_pivot[0] = m.recip();
        upper_mod[0] = off * inv_pivot[0];
        for i in 1..n {
            m = diag[i] - off * upper_mod[i - 1];
            inv_pivot[i] = m.recip();
            upper_mod[i] = off * inv_pivot[i];
        }
        Self {
            off,
            inv_pivot,
            upper_mod,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve(&self, rhs: &mut [T]) {
        let n = rhs.len();
        rhs[0] = rhs[0] * self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] = rhs[i] - self.upper_mod[i] * rhs[i + 1];
        }
    }

    /// Solves along axis 0 for every column of `data` at once. Rows are contiguous,
    /// so the sweep runs row-by-row with unit-stride inner loops.
    pub fn solve_columns(&self, data: &mut Array2<T>) {
        let n = data.nrows();
        assert_eq!(n, self.len());
        let off = self.off;
        for i in 0..n {
            let p = self.inv_pivot[i];
            if i == 0 {
                data.row_mut(0).mapv_inplace(|v| v * p);
            } else {
                let (prev, mut cur) = data.multi_slice_mut((s![i - 1, ..], s![i, ..]));
                Zip::from(&mut cur).and(&prev).for_each(|c, &pv| *c = (*c - off * pv) * p);
            }
        }
        for i in (0..n - 1).rev() {
            let u = self.upper_mod[i];
            let (mut cur, next) = data.multi_slice_mut((s![i, ..], s![i + 1, ..]));
            Zip::from(&mut cur).and(&next).for_each(|c, &nv| *c = *c - u * nv);
        }
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q.abs() < f64::MIN_POSITIVE.sqrt() {
            f64::MIN_POSITIVE.sqrt().copysign(q)
        } else {
            q
        };
        q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) by Sturm-sequence bisection.
pub fn kth_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let (mut lo, mut hi) = gershgorin(diag, off);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Lowest `k` eigenpairs of a real symmetric tridiagonal matrix, vectors normalized
/// to unit Euclidean length. `off[i]` couples entries `i` and `i+1`.
pub fn lowest_eigenpairs(diag: &[f64], off: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    assert!(k <= n && off.len() + 1 >= n);
    let mut values = Vec::with_capacity(k);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n {
        lower[i] = off[i - 1];
        upper[i - 1] = off[i - 1];
    }
    let mut shifted = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for idx in 0..k {
        let lambda = kth_eigenvalue(diag, off, idx);
        let shift = lambda + 1e-10 * lambda.abs().max(1e-3);
        for i in 0..n {
            shifted[i] = diag[i] - shift;
        }
        // deterministic, non-degenerate start vector
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
        for _ in 0..4 {
            thomas(&lower, &shifted, &upper, &mut v, &mut scratch);
            for prev in &vectors {
                let p: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= p * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
        }
        values.push(lambda);
        vectors.push(v);
    }
    (values, vectors)
}

/// All eigenpairs of a symmetric tridiagonal matrix, ascending. Dense `O(n^3)`
/// route; only used for the box-normalized continuum, where `n` is a few hundred.
pub fn all_eigenpairs(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}
