//! Finite-difference Laplacian `Δ_h = Δ₁⊗I⊗I + I⊗Δ₁⊗I + I⊗I⊗Δ₁` with
//! `Δ₁ = h⁻² tridiag(1, -2, 1)` and zero ghost values, optionally screened:
//! the operator applied here is `Δ_h - κ²`.

use crate::canonical::CanonicalTensor3;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteLaplacian<T> {
    grid: Grid3<T>,
    kappa: T,
}

impl<T: Real> DiscreteLaplacian<T> {
    pub fn new(grid: Grid3<T>, kappa: T) -> Result<Self> {
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!("screening kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { grid, kappa })
    }

    pub fn unscreened(grid: Grid3<T>) -> Self {
        Self { grid, kappa: T::zero() }
    }

    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    #[inline]
    pub fn inv_h2(&self) -> T {
        T::one() / (self.grid.h() * self.grid.h())
    }

    /// `out = Δ₁ v` with zero ghosts.
    pub fn apply_1d(&self, v: &[T], out: &mut [T]) {
        stencil_1d(self.inv_h2(), v, out);
    }

    /// Eigenvalue of `-Δ₁` for mode `j = 1..=m` on an `m`-point line.
    pub fn eigenvalue_1d(&self, j: usize, m: usize) -> T {
        let arg = T::PI() * T::of_usize(j) / T::of_usize(m + 1);
        T::of(2.0) * self.inv_h2() * (T::one() - arg.cos())
    }

    /// `(Δ_h - κ²) u` on a dense field with zero Dirichlet ghosts.
    pub fn apply_dense(&self, u: &[T]) -> Vec<T> {
        let n = self.grid.n();
        assert_eq!(u.len(), n * n * n);
        let mut out = vec![T::zero(); u.len()];
        apply_stencil_box(n, self.inv_h2(), self.kappa * self.kappa, u, &mut out);
        out
    }
}

pub(crate) fn stencil_1d<T: Real>(s: T, v: &[T], out: &mut [T]) {
    let m = v.len();
    for i in 0..m {
        let left = if i > 0 { v[i - 1] } else { T::zero() };
        let right = if i + 1 < m { v[i + 1] } else { T::zero() };
        out[i] = s * (left - T::of(2.0) * v[i] + right);
    }
}

/// `(Δ - k2) u` on an `m³` box with zero ghosts, `s = 1/h²`.
pub(crate) fn apply_stencil_box<T: Real>(m: usize, s: T, k2: T, u: &[T], out: &mut [T]) {
    use rayon::prelude::*;
    let six = T::of(6.0);
    out.par_chunks_mut(m * m).enumerate().for_each(|(i3, plane)| {
        for i2 in 0..m {
            for i1 in 0..m {
                let f = i1 + m * (i2 + m * i3);
                let c = u[f];
                let mut acc = -six * c;
                if i1 > 0 {
                    acc = acc + u[f - 1];
                }
                if i1 + 1 < m {
                    acc = acc + u[f + 1];
                }
                if i2 > 0 {
                    acc = acc + u[f - m];
                }
                if i2 + 1 < m {
                    acc = acc + u[f + m];
                }
                if i3 > 0 {
                    acc = acc + u[f - m * m];
                }
                if i3 + 1 < m {
                    acc = acc + u[f + m * m];
                }
                plane[i1 + m * i2] = s * acc - k2 * c;
            }
        }
    });
}

/// `(Δ_h - κ²)` applied to a canonical tensor, rank `3R` (plus `R` when
/// `κ > 0`). Output columns come in blocks: `Δ₁` on mode 1 for all input
/// columns, then mode 2, then mode 3, then the `-κ²` copies.
pub fn apply_kron_laplacian<T: Real>(t: &CanonicalTensor3<T>, lap: &DiscreteLaplacian<T>) -> Result<CanonicalTensor3<T>> {
    let n = lap.grid().n();
    if t.sizes() != [n; 3] {
        return Err(Error::ShapeMismatch(format!("tensor of size {:?} on an n={n} grid", t.sizes())));
    }
    apply_kron_stencil(t, lap.inv_h2(), lap.kappa() * lap.kappa())
}

/// Same as [`apply_kron_laplacian`] for any mode sizes, given `1/h²` and `κ²`.
pub(crate) fn apply_kron_stencil<T: Real>(t: &CanonicalTensor3<T>, s: T, k2: T) -> Result<CanonicalTensor3<T>> {
    let r = t.rank();
    let mut out = CanonicalTensor3::zeros(t.sizes());
    let mut buf: [Vec<T>; 3] = t.sizes().map(|m| vec![T::zero(); m]);
    for mode in 0..3 {
        for k in 0..r {
            stencil_1d(s, t.column(mode, k), &mut buf[mode]);
            let col = |l: usize| if l == mode { buf[l].as_slice() } else { t.column(l, k) };
            out.push_column(t.weights()[k], col(0), col(1), col(2));
        }
    }
    if k2 > T::zero() {
        for k in 0..r {
            out.push_column(-k2 * t.weights()[k], t.column(0, k), t.column(1, k), t.column(2, k));
        }
    }
    Ok(out)
}
