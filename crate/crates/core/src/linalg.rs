//! Small dense linear algebra: column-major matrices, Householder QR,
//! one-sided Jacobi SVD and non-negative least squares.
//!
//! These are sized for the problems in this crate (a few hundred rows or
//! columns); nothing here is blocked for cache beyond what `gemm` provides.

use std::ops::{Index, IndexMut};

use crate::scalar::{gemm, MatRef, Real};

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match shape");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn view(&self) -> MatRef<'_, T> {
        MatRef::col_major(&self.data, self.rows, self.cols)
    }

    pub fn view_t(&self) -> MatRef<'_, T> {
        MatRef::col_major_t(&self.data, self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows, rhs.cols);
        gemm(T::one(), self.view(), rhs.view(), T::zero(), &mut out.data, self.rows.max(1));
        out
    }

    /// `selfᵀ * rhs`.
    pub fn t_matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.cols, rhs.cols);
        gemm(T::one(), self.view_t(), rhs.view(), T::zero(), &mut out.data, self.cols.max(1));
        out
    }

    /// Keeps the first `k` columns.
    pub fn truncate_cols(mut self, k: usize) -> Self {
        assert!(k <= self.cols);
        self.data.truncate(k * self.rows);
        self.cols = k;
        self
    }

    pub fn frobenius(&self) -> T {
        norm2(&self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s = s + *x * *y;
    }
    s
}

/// Euclidean norm with scaling against overflow and underflow.
pub fn norm2<T: Real>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let s: T = v.iter().map(|x| (*x / scale) * (*x / scale)).sum();
    scale * s.sqrt()
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Householder QR of an `m x n` matrix with `m >= n`, stored compactly.
pub struct HouseholderQr<T> {
    qr: Mat<T>,
    tau: Vec<T>,
}

impl<T: Real> HouseholderQr<T> {
    pub fn new(mut a: Mat<T>) -> Self {
        let (m, n) = (a.rows, a.cols);
        assert!(m >= n, "QR needs at least as many rows as columns");
        let mut tau = vec![T::zero(); n];
        for j in 0..n {
            let (head, tail) = a.data.split_at_mut((j + 1) * m);
            let v = &mut head[j * m + j..];
            let alpha = v[0];
            let xnorm = norm2(&v[1..]);
            if xnorm == T::zero() {
                continue;
            }
            let beta = -alpha.signum() * (alpha * alpha + xnorm * xnorm).sqrt();
            let t = (beta - alpha) / beta;
            let scale = T::one() / (alpha - beta);
            for x in v[1..].iter_mut() {
                *x = *x * scale;
            }
            v[0] = beta;
            tau[j] = t;
            // Apply H = I - tau * u uᵀ (u = [1, v[1..]]) to the trailing columns.
            let u = &v[1..];
            for col in tail.chunks_exact_mut(m) {
                let c = &mut col[j..];
                let w = t * (c[0] + dot(u, &c[1..]));
                c[0] = c[0] - w;
                axpy(-w, u, &mut c[1..]);
            }
        }
        Self { qr: a, tau }
    }

    /// The `n x n` upper-triangular factor.
    pub fn r(&self) -> Mat<T> {
        let n = self.qr.cols;
        Mat::from_fn(n, n, |i, j| if i <= j { self.qr[(i, j)] } else { T::zero() })
    }

    /// Overwrites `b` with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [T]) {
        let (m, n) = (self.qr.rows, self.qr.cols);
        assert_eq!(b.len(), m);
        for j in 0..n {
            let t = self.tau[j];
            if t == T::zero() {
                continue;
            }
            let u = &self.qr.col(j)[j + 1..];
            let w = t * (b[j] + dot(u, &b[j + 1..]));
            b[j] = b[j] - w;
            axpy(-w, u, &mut b[j + 1..]);
        }
    }

    /// Least-squares solution of `min ‖A x − b‖`. Exactly zero pivots yield
    /// zero components; nearly collinear columns are resolved as far as the
    /// arithmetic allows, which the exponential-sum fits depend on.
    pub fn solve_lstsq(&self, b: &[T]) -> Vec<T> {
        let n = self.qr.cols;
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        let dmax = (0..n).fold(T::zero(), |m, i| m.max(self.qr[(i, i)].abs()));
        let cut = dmax * T::min_positive_value().sqrt();
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let d = self.qr[(i, i)];
            if d.abs() <= cut {
                continue;
            }
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.qr[(i, k)] * x[k];
            }
            x[i] = s / d;
        }
        x
    }
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`, singular values
/// in non-increasing order.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Mat<T>,
    pub s: Vec<T>,
    pub v: Mat<T>,
}

impl<T: Real> Svd<T> {
    /// Number of singular values strictly above `rel * s[0]`.
    pub fn rank_above(&self, rel: T) -> usize {
        match self.s.first() {
            Some(&s0) if s0 > T::zero() => self.s.iter().take_while(|&&s| s > rel * s0).count(),
            _ => 0,
        }
    }
}

/// One-sided Jacobi SVD. Handles both tall and wide inputs.
pub fn svd<T: Real>(a: &Mat<T>) -> Svd<T> {
    if a.rows >= a.cols {
        jacobi_tall(a.clone())
    } else {
        let Svd { u, s, v } = jacobi_tall(a.transpose());
        Svd { u: v, s, v: u }
    }
}

/// Left singular vectors and singular values of a (possibly very wide)
/// `m x k` matrix. For `k > m` the matrix is first reduced by a QR of its
/// transpose, so the Jacobi sweeps only ever see an `m x m` problem.
pub fn left_singular<T: Real>(a: &Mat<T>) -> (Mat<T>, Vec<T>) {
    let (m, k) = (a.rows, a.cols);
    if k > m {
        let r = HouseholderQr::new(a.transpose()).r();
        // A = Rᵀ Qᵀ, so A and Rᵀ share left singular vectors.
        let Svd { u, s, .. } = jacobi_tall(r.transpose());
        (u, s)
    } else {
        let Svd { u, s, .. } = jacobi_tall(a.clone());
        (u, s)
    }
}

fn jacobi_tall<T: Real>(mut u: Mat<T>) -> Svd<T> {
    let (m, n) = (u.rows, u.cols);
    let mut v = Mat::identity(n);
    let eps = T::epsilon();
    let mut norms: Vec<T> = (0..n).map(|j| dot(u.col(j), u.col(j))).collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                let gamma = dot(u.col(p), u.col(q));
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_cols(&mut u, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
                norms[p] = dot(u.col(p), u.col(p));
                norms[q] = dot(u.col(q), u.col(q));
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<T> = (0..n).map(|j| norm2(u.col(j))).collect();
    order.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut uo = Mat::zeros(m, n);
    let mut vo = Mat::zeros(n, n);
    let mut so = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = sig[src];
        so.push(s);
        if s > T::zero() {
            for (o, x) in uo.col_mut(dst).iter_mut().zip(u.col(src)) {
                *o = *x / s;
            }
        }
        vo.col_mut(dst).copy_from_slice(v.col(src));
    }
    Svd { u: uo, s: so, v: vo }
}

fn rotate_cols<T: Real>(a: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    let m = a.rows;
    let (lo, hi) = a.data.split_at_mut(q * m);
    let cp = &mut lo[p * m..(p + 1) * m];
    let cq = &mut hi[..m];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Lawson–Hanson non-negative least squares: `min ‖A x − b‖, x ≥ 0`.
pub fn nnls<T: Real>(a: &Mat<T>, b: &[T]) -> Vec<T> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.len(), m);
    let mut x = vec![T::zero(); n];
    let mut passive = vec![false; n];
    // The gradient threshold must be tiny: with nearly collinear columns a
    // gradient component of 1e-9 can still carry a large weight.
    let tol = T::epsilon() * a.frobenius() * norm2(b);

    let gradient = |x: &[T]| -> Vec<T> {
        let mut r = b.to_vec();
        for (j, &xj) in x.iter().enumerate() {
            if xj != T::zero() {
                axpy(-xj, a.col(j), &mut r);
            }
        }
        (0..n).map(|j| dot(a.col(j), &r)).collect()
    };

    let solve_passive = |passive: &[bool]| -> Vec<T> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = Mat::from_fn(m, idx.len(), |i, k| a[(i, idx[k])]);
        let zs = HouseholderQr::new(sub).solve_lstsq(b);
        let mut z = vec![T::zero(); n];
        for (k, &j) in idx.iter().enumerate() {
            z[j] = zs[k];
        }
        z
    };

    'outer: for _outer in 0..4 * n.max(1) {
        let w = gradient(&x);
        // Pick the steepest inactive variable whose unconstrained solve keeps
        // it positive; skipping the others avoids the well-known cycle where a
        // variable enters and immediately leaves again.
        let mut skipped = vec![false; n];
        let mut z = loop {
            let cand = (0..n)
                .filter(|&j| !passive[j] && !skipped[j])
                .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap_or(std::cmp::Ordering::Equal));
            let Some(jmax) = cand else { break 'outer };
            if w[jmax] <= tol {
                break 'outer;
            }
            passive[jmax] = true;
            let z = solve_passive(&passive);
            if z[jmax] > T::zero() {
                break z;
            }
            passive[jmax] = false;
            skipped[jmax] = true;
        };
        loop {
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > T::zero()) {
                x = z;
                break;
            }
            let mut alpha = T::one();
            for j in 0..n {
                if passive[j] && z[j] <= T::zero() {
                    let denom = x[j] - z[j];
                    if denom > T::zero() {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            let xscale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            for j in 0..n {
                x[j] = x[j] + alpha * (z[j] - x[j]);
                if passive[j] && x[j] <= T::epsilon() * xscale {
                    x[j] = T::zero();
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
            z = solve_passive(&passive);
        }
    }
    x
}
