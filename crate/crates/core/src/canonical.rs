//! Rank-R canonical (CP) tensors on an `n1 x n2 x n3` index set.
//!
//! Entry `(i1, i2, i3)` is `Σ_k ξ_k A1[i1,k] A2[i2,k] A3[i3,k]`. Side matrices
//! are stored column-major, so each canonical vector is a contiguous slice.
//! Dense arrays produced here use axis 1 as the fastest index.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::scalar::{gemm, MatRef, Real};

const MAGIC: &[u8; 8] = b"CANTEN3\0";

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalTensor3<T> {
    sizes: [usize; 3],
    weights: Vec<T>,
    factors: [Vec<T>; 3],
}

impl<T: Real> CanonicalTensor3<T> {
    /// Builds a tensor from weights and column-major side matrices.
    pub fn new(sizes: [usize; 3], weights: Vec<T>, factors: [Vec<T>; 3]) -> Result<Self> {
        let r = weights.len();
        for (l, f) in factors.iter().enumerate() {
            if f.len() != sizes[l] * r {
                return Err(Error::ShapeMismatch(format!(
                    "side matrix {} has {} entries, expected {}x{}",
                    l + 1,
                    f.len(),
                    sizes[l],
                    r
                )));
            }
        }
        Ok(Self { sizes, weights, factors })
    }

    /// The zero tensor (rank 0).
    pub fn zeros(sizes: [usize; 3]) -> Self {
        Self { sizes, weights: Vec::new(), factors: [Vec::new(), Vec::new(), Vec::new()] }
    }

    /// A single rank-1 term `ξ · a ∘ b ∘ c`.
    pub fn rank_one(weight: T, a: Vec<T>, b: Vec<T>, c: Vec<T>) -> Self {
        Self { sizes: [a.len(), b.len(), c.len()], weights: vec![weight], factors: [a, b, c] }
    }

    #[inline]
    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    /// Column-major side matrix of mode `l` (0-based).
    #[inline]
    pub fn factor(&self, l: usize) -> &[T] {
        &self.factors[l]
    }

    pub fn factor_mat(&self, l: usize) -> Mat<T> {
        Mat::from_col_major(self.sizes[l], self.rank(), self.factors[l].clone())
    }

    /// Canonical vector `k` of mode `l`.
    #[inline]
    pub fn column(&self, l: usize, k: usize) -> &[T] {
        let n = self.sizes[l];
        &self.factors[l][k * n..(k + 1) * n]
    }

    /// Appends a rank-1 term.
    pub fn push_column(&mut self, weight: T, a: &[T], b: &[T], c: &[T]) {
        assert!(a.len() == self.sizes[0] && b.len() == self.sizes[1] && c.len() == self.sizes[2]);
        self.weights.push(weight);
        self.factors[0].extend_from_slice(a);
        self.factors[1].extend_from_slice(b);
        self.factors[2].extend_from_slice(c);
    }

    /// Keeps only the columns in `range`.
    pub fn select_columns(&self, range: std::ops::Range<usize>) -> Self {
        let mut factors: [Vec<T>; 3] = Default::default();
        for l in 0..3 {
            let n = self.sizes[l];
            factors[l] = self.factors[l][range.start * n..range.end * n].to_vec();
        }
        Self { sizes: self.sizes, weights: self.weights[range].to_vec(), factors }
    }

    /// Concatenates the columns of several tensors of equal size.
    pub fn concat(sizes: [usize; 3], parts: &[Self]) -> Result<Self> {
        let total: usize = parts.iter().map(|p| p.rank()).sum();
        let mut out = Self {
            sizes,
            weights: Vec::with_capacity(total),
            factors: [0, 1, 2].map(|l| Vec::with_capacity(total * sizes[l])),
        };
        for p in parts {
            if p.sizes != sizes {
                return Err(Error::ShapeMismatch(format!("cannot concatenate {:?} into {:?}", p.sizes, sizes)));
            }
            out.weights.extend_from_slice(&p.weights);
            for l in 0..3 {
                out.factors[l].extend_from_slice(&p.factors[l]);
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().chain(self.factors.iter().flatten()).all(|v| v.is_finite())
    }

    /// Entry at `idx`, cost `O(R)`.
    pub fn eval_entry(&self, idx: [usize; 3]) -> Result<T> {
        if (0..3).any(|l| idx[l] >= self.sizes[l]) {
            return Err(Error::IndexOutOfRange { index: idx, sizes: self.sizes });
        }
        Ok(self.entry(idx))
    }

    /// Entry at `idx` without range checking beyond slice bounds.
    #[inline]
    pub fn entry(&self, idx: [usize; 3]) -> T {
        let [n1, n2, n3] = self.sizes;
        let (a, b, c) = (&self.factors[0], &self.factors[1], &self.factors[2]);
        let mut s = T::zero();
        for (k, &w) in self.weights.iter().enumerate() {
            s = s + w * a[idx[0] + k * n1] * b[idx[1] + k * n2] * c[idx[2] + k * n3];
        }
        s
    }

    /// Multiplies every entry by `alpha` (folded into the weights).
    pub fn scale(&mut self, alpha: T) {
        for w in &mut self.weights {
            *w = *w * alpha;
        }
    }

    /// `alpha * x + y` by column concatenation.
    pub fn axpy(alpha: T, x: &Self, y: &Self) -> Result<Self> {
        if x.sizes != y.sizes {
            return Err(Error::ShapeMismatch(format!("axpy of {:?} and {:?}", x.sizes, y.sizes)));
        }
        let mut xs = x.clone();
        xs.scale(alpha);
        Self::concat(x.sizes, &[xs, y.clone()])
    }

    /// Frobenius norm from the Gram matrices of the side matrices,
    /// `‖T‖² = Σ_{k,k'} ξ_k ξ_k' Π_l ⟨a_k^l, a_k'^l⟩`, computed in column
    /// blocks so memory stays `O(R · block)`.
    pub fn frobenius_norm(&self) -> T {
        let r = self.rank();
        if r == 0 {
            return T::zero();
        }
        const BLOCK: usize = 256;
        let mut total = T::zero();
        let mut grams: [Vec<T>; 3] = Default::default();
        for start in (0..r).step_by(BLOCK) {
            let bw = BLOCK.min(r - start);
            for l in 0..3 {
                let n = self.sizes[l];
                let g = &mut grams[l];
                g.clear();
                g.resize(r * bw, T::zero());
                let a = MatRef::col_major_t(&self.factors[l], n, r);
                let blk = MatRef::col_major(&self.factors[l][start * n..(start + bw) * n], n, bw);
                gemm(T::one(), a, blk, T::zero(), g, r);
            }
            for j in 0..bw {
                let wj = self.weights[start + j];
                let mut s = T::zero();
                for k in 0..r {
                    let off = k + j * r;
                    s = s + self.weights[k] * grams[0][off] * grams[1][off] * grams[2][off];
                }
                total = total + wj * s;
            }
        }
        total.max(T::zero()).sqrt()
    }

    /// Dense materialization, axis 1 fastest. One matrix product per
    /// mode-3 slice: `plane(i3) = A1 · diag(ξ ∘ A3[i3,:]) · A2ᵀ`.
    pub fn to_dense(&self) -> Vec<T> {
        let [n1, n2, n3] = self.sizes;
        let r = self.rank();
        let mut out = vec![T::zero(); n1 * n2 * n3];
        if r == 0 || out.is_empty() {
            return out;
        }
        let a2t = MatRef::col_major_t(&self.factors[1], n2, r);
        out.par_chunks_mut(n1 * n2).enumerate().for_each(|(i3, plane)| {
            let mut scaled = self.factors[0].clone();
            for k in 0..r {
                let s = self.weights[k] * self.factors[2][i3 + k * n3];
                for v in &mut scaled[k * n1..(k + 1) * n1] {
                    *v = *v * s;
                }
            }
            gemm(T::one(), MatRef::col_major(&scaled, n1, r), a2t, T::zero(), plane, n1);
        });
        out
    }

    /// Inner product of two canonical tensors of equal size.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.sizes != other.sizes {
            return Err(Error::ShapeMismatch("inner product of tensors of different size".into()));
        }
        let mut s = T::zero();
        for k in 0..self.rank() {
            for j in 0..other.rank() {
                let mut p = self.weights[k] * other.weights[j];
                for l in 0..3 {
                    p = p * dot(self.column(l, k), other.column(l, j));
                }
                s = s + p;
            }
        }
        Ok(s)
    }

    /// Writes the binary layout: 8-byte magic `CANTEN3\0`, four little-endian
    /// `u64` (n1, n2, n3, R), then little-endian `f64` arrays ξ, A1, A2, A3,
    /// each side matrix column-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.sizes[0], self.sizes[1], self.sizes[2], self.rank()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * (self.rank() + self.factors.iter().map(Vec::len).sum::<usize>()));
        for v in self.weights.iter().chain(self.factors.iter().flatten()) {
            buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a canonical tensor file (bad magic)".into()));
        }
        let mut hdr = [0u64; 4];
        for h in &mut hdr {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = u64::from_le_bytes(b);
        }
        let to_usize = |v: u64| usize::try_from(v).map_err(|_| Error::Format("header value too large".into()));
        let sizes = [to_usize(hdr[0])?, to_usize(hdr[1])?, to_usize(hdr[2])?];
        let rank = to_usize(hdr[3])?;
        let count = |n: usize| {
            n.checked_mul(rank).filter(|&c| c <= (1 << 34)).ok_or_else(|| Error::Format("tensor too large".into()))
        };
        let mut read_vec = |len: usize| -> Result<Vec<T>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap()))).collect())
        };
        let weights = read_vec(rank)?;
        let a = read_vec(count(sizes[0])?)?;
        let b = read_vec(count(sizes[1])?)?;
        let c = read_vec(count(sizes[2])?)?;
        Self::new(sizes, weights, [a, b, c])
    }
}

/// Dense reference expansion by a plain triple loop; used by tests as an
/// oracle independent of [`CanonicalTensor3::to_dense`].
pub fn dense_by_loops<T: Real>(t: &CanonicalTensor3<T>) -> Vec<T> {
    let [n1, n2, n3] = t.sizes();
    let mut out = Vec::with_capacity(n1 * n2 * n3);
    for i3 in 0..n3 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                out.push(t.entry([i1, i2, i3]));
            }
        }
    }
    out
}
