//! Canonical reference tensor of the Newton kernel on the doubled grid and
//! its long/short column split.
//!
//! Side vectors are collocated Gaussians: column `k` of every mode holds
//! `exp(-t_k² x²)` at the doubled-grid offsets `x = o h`, `o = -n..n-1`, and
//! the weight vector holds `ξ_k = c_k`. Wide index `w` corresponds to offset
//! `w - n`, so offset 0 sits at wide index `n`.

use crate::canonical::CanonicalTensor3;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::quadrature::{build_quadrature, build_quadrature_for_tolerance, SincQuadrature};
use crate::scalar::Real;

/// Long/short partition of the reference columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSplit<T> {
    /// Columns `0..long_rank` are long-range.
    pub long_rank: usize,
    /// Separation parameter in grid units.
    pub gamma: usize,
    pub eps_support: T,
}

#[derive(Clone, Debug)]
pub struct ReferenceKernel<T> {
    grid: Grid3<T>,
    quadrature: SincQuadrature<T>,
    wide: CanonicalTensor3<T>,
    split: Option<KernelSplit<T>>,
}

/// Samples the quadrature Gaussians on the doubled grid of `grid`.
pub fn assemble_reference_tensor<T: Real>(q: &SincQuadrature<T>, grid: &Grid3<T>) -> Result<ReferenceKernel<T>> {
    let (lo, hi) = q.interval();
    let slack = T::of(1e-9);
    if lo > grid.h() * (T::one() + slack) || hi < grid.wide_diameter() * (T::one() - slack) {
        return Err(Error::InvalidArgument(format!(
            "quadrature interval [{lo}, {hi}] does not cover [h, {}]",
            grid.wide_diameter()
        )));
    }
    let n = grid.n();
    let h = grid.h();
    let wide_len = 2 * n;
    let mut column = Vec::with_capacity(wide_len * q.rank());
    for &t in q.nodes() {
        for w in 0..wide_len {
            let o = w.abs_diff(n);
            let tx = t * T::of_usize(o) * h;
            column.push((-(tx * tx)).exp());
        }
    }
    let wide = CanonicalTensor3::new(
        [wide_len; 3],
        q.weights().to_vec(),
        [column.clone(), column.clone(), column],
    )?;
    Ok(ReferenceKernel { grid: *grid, quadrature: q.clone(), wide, split: None })
}

/// Threshold split: column `k` is short-range when
/// `exp(-t_k² (γh/2)²) <= eps_support`. Columns are sorted by `t_k`, so
/// the long columns form a prefix, namely those with
/// `t_k < sqrt(ln(1/eps_support)) / (γh/2)`.
pub fn split_reference<T: Real>(kernel: &ReferenceKernel<T>, gamma: usize, eps_support: T) -> Result<ReferenceKernel<T>> {
    kernel.check_split_args(gamma, eps_support)?;
    let half = T::of_usize(gamma) * kernel.grid.h() / T::of(2.0);
    let long_rank = kernel
        .quadrature
        .nodes()
        .iter()
        .take_while(|&&t| (-(t * half) * (t * half)).exp() > eps_support)
        .count();
    let mut out = kernel.clone();
    out.split = Some(KernelSplit { long_rank, gamma, eps_support });
    Ok(out)
}

/// Count split: the first `long_rank` columns are long-range. The recorded
/// separation is the smallest `γ` for which every short column meets the
/// support bound, which may be large when the split sits among smooth
/// columns.
pub fn split_reference_at<T: Real>(kernel: &ReferenceKernel<T>, long_rank: usize, eps_support: T) -> Result<ReferenceKernel<T>> {
    let r = kernel.rank();
    if long_rank > r {
        return Err(Error::InvalidArgument(format!("long rank {long_rank} exceeds kernel rank {r}")));
    }
    if !(eps_support > T::zero()) {
        return Err(Error::InvalidArgument(format!("eps_support must be positive, got {eps_support}")));
    }
    let gamma = if long_rank == r {
        1
    } else {
        count_split_gamma(kernel.quadrature.nodes()[long_rank] * kernel.grid.h(), eps_support)
    };
    let mut out = kernel.clone();
    out.split = Some(KernelSplit { long_rank, gamma, eps_support });
    Ok(out)
}

/// Smallest `γ` with `exp(-(t h)² (γ/2)²) <= eps_support` for the first
/// short column, given its node in grid units `t h`.
pub fn count_split_gamma<T: Real>(th: T, eps_support: T) -> usize {
    let need = T::of(2.0) * (-eps_support.ln()).max(T::zero()).sqrt() / th;
    need.ceil().to_usize().unwrap_or(usize::MAX).max(1)
}

impl<T: Real> ReferenceKernel<T> {
    /// Builds an `R`-term kernel for `grid`, with the quadrature fitted on
    /// `[h, √3 n h]` (the largest distance on the doubled grid).
    pub fn build(grid: &Grid3<T>, rank: usize) -> Result<Self> {
        let q = build_quadrature(rank, grid.h(), grid.wide_diameter())?;
        assemble_reference_tensor(&q, grid)
    }

    /// Builds the kernel with the smallest rank meeting `tol`.
    pub fn build_for_tolerance(grid: &Grid3<T>, tol: T) -> Result<Self> {
        let q = build_quadrature_for_tolerance(tol, grid.h(), grid.wide_diameter())?;
        assemble_reference_tensor(&q, grid)
    }

    fn check_split_args(&self, gamma: usize, eps_support: T) -> Result<()> {
        if gamma == 0 {
            return Err(Error::InvalidArgument("gamma must be at least 1".into()));
        }
        if !(eps_support > T::zero()) {
            return Err(Error::InvalidArgument(format!("eps_support must be positive, got {eps_support}")));
        }
        let span = T::of_usize(gamma) * self.grid.h();
        let width = T::of(2.0) * self.grid.half_width();
        if span > width {
            return Err(Error::SeparationTooLarge { gamma, span: span.to_f64_lossy(), width: width.to_f64_lossy() });
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    pub fn quadrature(&self) -> &SincQuadrature<T> {
        &self.quadrature
    }

    /// The full reference tensor on the `2n` doubled grid.
    pub fn wide(&self) -> &CanonicalTensor3<T> {
        &self.wide
    }

    pub fn rank(&self) -> usize {
        self.wide.rank()
    }

    pub fn split(&self) -> Option<&KernelSplit<T>> {
        self.split.as_ref()
    }

    pub fn require_split(&self) -> Result<&KernelSplit<T>> {
        self.split.as_ref().ok_or(Error::KernelNotSplit)
    }

    /// Wide index of offset 0.
    #[inline]
    pub fn wide_center(&self) -> usize {
        self.grid.n()
    }

    /// Gaussian samples of column `k` on the doubled grid (same on all modes).
    #[inline]
    pub fn wide_column(&self, k: usize) -> &[T] {
        self.wide.column(0, k)
    }

    /// Reference entry at a node offset, each component in `-n..n`.
    pub fn entry_at_offset(&self, off: [i64; 3]) -> Result<T> {
        let n = self.grid.n() as i64;
        if off.iter().any(|&o| o < -n || o >= n) {
            return Err(Error::InvalidArgument(format!("offset {off:?} outside the doubled grid")));
        }
        Ok(self.wide.entry(off.map(|o| (o + n) as usize)))
    }

    /// Long-range columns of the wide tensor.
    pub fn long_part(&self) -> Result<CanonicalTensor3<T>> {
        let s = self.require_split()?;
        Ok(self.wide.select_columns(0..s.long_rank))
    }

    /// Short-range columns of the wide tensor.
    pub fn short_part(&self) -> Result<CanonicalTensor3<T>> {
        let s = self.require_split()?;
        Ok(self.wide.select_columns(s.long_rank..self.rank()))
    }

    /// Center value `Σ_k c_k` (the bounded value at zero distance).
    pub fn center_value(&self) -> T {
        self.quadrature.weights().iter().copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ReferenceKernel<f64> {
        ReferenceKernel::build(&Grid3::new(4.0, 17).unwrap(), 12).unwrap()
    }

    #[test]
    fn wide_vectors_have_length_2n() {
        let k = small();
        assert_eq!(k.wide().sizes(), [34, 34, 34]);
        assert_eq!(k.wide_center(), 17);
        assert!((k.entry_at_offset([0, 0, 0]).unwrap() - k.center_value()).abs() < 1e-12 * k.center_value());
        assert!(k.entry_at_offset([17, 0, 0]).is_err());
        assert!(k.entry_at_offset([-17, 0, 0]).is_ok());
    }

    #[test]
    fn split_is_a_column_partition() {
        let k = split_reference(&small(), 4, 1e-8).unwrap();
        let s = k.split().unwrap();
        assert_eq!(k.long_part().unwrap().rank() + k.short_part().unwrap().rank(), k.rank());
        let n = 17i64;
        for off in [[0, 0, 0], [1, -2, 3], [-n, n - 1, 0]] {
            let idx = off.map(|o| (o + n) as usize);
            let full = k.wide().entry(idx);
            let parts = k.long_part().unwrap().entry(idx) + k.short_part().unwrap().entry(idx);
            assert!((full - parts).abs() <= 1e-15 * full.abs().max(1.0));
        }
        assert!(s.long_rank <= k.rank());
    }

    #[test]
    fn unsplit_kernel_reports_error() {
        assert!(matches!(small().long_part(), Err(Error::KernelNotSplit)));
    }

    #[test]
    fn split_argument_errors() {
        let k = small();
        assert!(split_reference(&k, 0, 1e-8).is_err());
        assert!(split_reference(&k, 4, 0.0).is_err());
        assert!(matches!(split_reference(&k, 17, 1e-8), Err(Error::SeparationTooLarge { .. })));
        assert!(split_reference(&k, 16, 1e-8).is_ok());
    }

    #[test]
    fn eps_one_classifies_everything_short() {
        let k = split_reference(&small(), 4, 1.0).unwrap();
        assert_eq!(k.split().unwrap().long_rank, 0);
    }

    #[test]
    fn count_split_meets_support_bound() {
        let k = split_reference_at(&small(), 5, 1e-8).unwrap();
        let s = *k.split().unwrap();
        assert_eq!(s.long_rank, 5);
        let half = s.gamma as f64 * k.grid().h() / 2.0;
        for &t in &k.quadrature().nodes()[5..] {
            assert!((-(t * half) * (t * half)).exp() <= 1e-8);
        }
        // The threshold rule at the effective gamma keeps at most as many long columns.
        let t = split_reference(&small(), s.gamma.min(16), 1e-8).unwrap();
        assert!(t.split().unwrap().long_rank <= 5 || s.gamma > 16);
    }
}
