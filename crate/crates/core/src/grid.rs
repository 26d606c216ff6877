//! Uniform Cartesian grid on the cube `[-b, b]^3`.
//!
//! Indices are 0-based in code: node `i` sits at `-b + i h` with
//! `h = 2b / (n - 1)`, so node `0` is `-b` and node `n - 1` is `+b`.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3<T> {
    b: T,
    n: usize,
    h: T,
}

impl<T: Real> Grid3<T> {
    pub fn new(half_width: T, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("grid needs n >= 3, got {n}")));
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
        }
        let h = T::of(2.0) * half_width / T::of_usize(n - 1);
        Ok(Self { b: half_width, n, h })
    }

    #[inline]
    pub fn half_width(&self) -> T {
        self.b
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    /// Number of nodes in the full volume.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along any axis. Written as a symmetric affine
    /// map so that `0 -> -b`, `n-1 -> b` and the center node hit exactly.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        let two_i = T::of_usize(2 * i);
        let nm1 = T::of_usize(self.n - 1);
        self.b * ((two_i - nm1) / nm1)
    }

    pub fn coords(&self) -> Vec<T> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    pub fn point(&self, idx: [usize; 3]) -> [T; 3] {
        [self.coord(idx[0]), self.coord(idx[1]), self.coord(idx[2])]
    }

    /// Flat index with axis 1 fastest.
    #[inline]
    pub fn flat(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.n * (idx[1] + self.n * idx[2])
    }

    #[inline]
    pub fn unflat(&self, f: usize) -> [usize; 3] {
        let n = self.n;
        [f % n, (f / n) % n, f / (n * n)]
    }

    pub fn center_index(&self) -> Option<usize> {
        (self.n % 2 == 1).then_some(self.n / 2)
    }

    pub fn check_index(&self, idx: [usize; 3]) -> Result<()> {
        if idx.iter().any(|&i| i >= self.n) {
            return Err(Error::IndexOutOfRange { index: idx, sizes: [self.n; 3] });
        }
        Ok(())
    }

    /// Largest distance between two points of the doubled reference grid,
    /// `√3 · n h`; the quadrature must be accurate up to here.
    pub fn wide_diameter(&self) -> T {
        T::of(3.0).sqrt() * T::of_usize(self.n) * self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_exact() {
        for n in [3, 4, 17, 129, 257] {
            let g = Grid3::new(16.0f64, n).unwrap();
            assert_eq!(g.coord(0), -16.0);
            assert_eq!(g.coord(n - 1), 16.0);
            if let Some(c) = g.center_index() {
                assert_eq!(g.coord(c), 0.0);
            }
            assert!(g.coords().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn coordinate_matches_affine_form() {
        let g = Grid3::new(16.0f64, 257).unwrap();
        assert_eq!(g.h(), 0.125);
        for i in 0..257 {
            assert!((g.coord(i) - (-16.0 + i as f64 * 0.125)).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_roundtrip() {
        let g = Grid3::new(1.0f32, 5).unwrap();
        for f in 0..g.len() {
            assert_eq!(g.flat(g.unflat(f)), f);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid3::new(1.0f64, 2).is_err());
        assert!(Grid3::new(0.0f64, 9).is_err());
        assert!(Grid3::new(f64::NAN, 9).is_err());
    }
}
