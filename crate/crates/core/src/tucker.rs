//! Tucker tensors and the canonical ↔ Tucker rank-reduction transforms.

use crate::canonical::CanonicalTensor3;
use crate::error::{Error, Result};
use crate::linalg::{left_singular, svd, Mat};
use crate::scalar::{gemm, MatRef, Real};

/// `core ×1 U1 ×2 U2 ×3 U3` with orthonormal factor columns. The core is a
/// dense `r1 x r2 x r3` array, first index fastest.
#[derive(Clone, Debug)]
pub struct TuckerTensor3<T> {
    factors: [Mat<T>; 3],
    core: Vec<T>,
}

impl<T: Real> TuckerTensor3<T> {
    pub fn new(factors: [Mat<T>; 3], core: Vec<T>) -> Result<Self> {
        let r: usize = factors.iter().map(|f| f.cols()).product();
        if core.len() != r {
            return Err(Error::ShapeMismatch(format!("core has {} entries, ranks give {}", core.len(), r)));
        }
        Ok(Self { factors, core })
    }

    pub fn ranks(&self) -> [usize; 3] {
        [self.factors[0].cols(), self.factors[1].cols(), self.factors[2].cols()]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.factors[0].rows(), self.factors[1].rows(), self.factors[2].rows()]
    }

    pub fn factor(&self, l: usize) -> &Mat<T> {
        &self.factors[l]
    }

    pub fn core(&self) -> &[T] {
        &self.core
    }

    pub fn core_entry(&self, a: usize, b: usize, c: usize) -> T {
        let [r1, r2, _] = self.ranks();
        self.core[a + r1 * (b + r2 * c)]
    }

    /// `‖Uᵀ U − I‖_F` for mode `l`.
    pub fn orthogonality_defect(&self, l: usize) -> T {
        let u = &self.factors[l];
        let g = u.t_matmul(u);
        let mut s = T::zero();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let e = g[(i, j)] - if i == j { T::one() } else { T::zero() };
                s = s + e * e;
            }
        }
        s.sqrt()
    }

    /// Dense materialization by three successive mode products.
    pub fn to_dense(&self) -> Vec<T> {
        let [n1, n2, n3] = self.sizes();
        let [r1, r2, r3] = self.ranks();
        let mut out = vec![T::zero(); n1 * n2 * n3];
        if r1 * r2 * r3 == 0 {
            return out;
        }
        // t1 = U1 · core(r1 x r2 r3): n1 x (r2 r3)
        let mut t1 = vec![T::zero(); n1 * r2 * r3];
        gemm(T::one(), self.factors[0].view(), MatRef::col_major(&self.core, r1, r2 * r3), T::zero(), &mut t1, n1);
        // t2[:, :, c] = t1[:, :, c] · U2ᵀ: (n1 n2) x r3
        let mut t2 = vec![T::zero(); n1 * n2 * r3];
        for c in 0..r3 {
            let src = &t1[c * n1 * r2..(c + 1) * n1 * r2];
            let dst = &mut t2[c * n1 * n2..(c + 1) * n1 * n2];
            gemm(T::one(), MatRef::col_major(src, n1, r2), self.factors[1].view_t(), T::zero(), dst, n1);
        }
        gemm(
            T::one(),
            MatRef::col_major(&t2, n1 * n2, r3),
            self.factors[2].view_t(),
            T::zero(),
            &mut out,
            n1 * n2,
        );
        out
    }
}

/// Canonical-to-Tucker by reduced HOSVD.
///
/// Mode `l` uses the left singular vectors of `A_l · diag(|ξ|^{1/3})`; the
/// sign of ξ does not change the column space, so it stays in the core.
/// Singular values `σ_j > eps · σ_1` are kept. The core
/// `Σ_k ξ_k (U1ᵀa1_k) ∘ (U2ᵀa2_k) ∘ (U3ᵀa3_k)` is assembled from the
/// projected side matrices without forming the full tensor.
pub fn c2t_rhosvd<T: Real>(t: &CanonicalTensor3<T>, eps: T) -> Result<TuckerTensor3<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidArgument(format!("RHOSVD threshold must be positive, got {eps}")));
    }
    if t.rank() == 0 {
        return Err(Error::InvalidArgument("RHOSVD needs rank >= 1".into()));
    }
    if !t.all_finite() {
        return Err(Error::NonFinite("canonical side matrices"));
    }
    let r = t.rank();
    let scale: Vec<T> = t.weights().iter().map(|w| w.abs().cbrt()).collect();
    let mode_basis = |l: usize| -> Mat<T> {
        let n = t.sizes()[l];
        let mut m = t.factor_mat(l);
        for k in 0..r {
            for v in m.col_mut(k) {
                *v = *v * scale[k];
            }
        }
        let (u, s) = left_singular(&m);
        let keep = match s.first() {
            Some(&s0) if s0 > T::zero() => s.iter().take_while(|&&v| v > eps * s0).count(),
            _ => 0,
        };
        let keep = keep.min(n);
        u.truncate_cols(keep)
    };
    let (u1, (u2, u3)) = rayon::join(|| mode_basis(0), || rayon::join(|| mode_basis(1), || mode_basis(2)));
    let factors = [u1, u2, u3];
    let projected: Vec<Vec<T>> = (0..3)
        .map(|l| {
            let u = &factors[l];
            let mut b = vec![T::zero(); u.cols() * r];
            gemm(T::one(), u.view_t(), MatRef::col_major(t.factor(l), t.sizes()[l], r), T::zero(), &mut b, u.cols().max(1));
            b
        })
        .collect();
    let ranks = [factors[0].cols(), factors[1].cols(), factors[2].cols()];
    let [b1, b2, b3]: [Vec<T>; 3] = projected.try_into().unwrap();
    let core = CanonicalTensor3::new(ranks, t.weights().to_vec(), [b1, b2, b3])?.to_dense();
    TuckerTensor3::new(factors, core)
}

/// Tucker-to-canonical.
///
/// The core is unfolded along the mode `l` minimizing `r_l · min(r_a, r_b)`
/// (ties to the lower mode), giving rank at most `min(r1r2, r2r3, r1r3)`.
/// Each retained right singular vector is reshaped to `r_a x r_b` and split
/// again by SVD. With `τ = eps · ‖core‖_F`, the first level drops a tail of
/// energy at most `τ²/2` and each of the `p` second-level splits at most
/// `τ²/(2p)`, so the total error is at most `τ`.
pub fn t2c<T: Real>(t: &TuckerTensor3<T>, eps: T) -> Result<CanonicalTensor3<T>> {
    if !t.core.iter().all(|v| v.is_finite()) || !t.factors.iter().all(|f| f.all_finite()) {
        return Err(Error::NonFinite("Tucker tensor"));
    }
    let ranks = t.ranks();
    let sizes = t.sizes();
    let mut out = CanonicalTensor3::zeros(sizes);
    let core_norm = crate::linalg::norm2(&t.core);
    if core_norm == T::zero() {
        return Ok(out);
    }
    let l = (0..3)
        .min_by_key(|&l| {
            let (a, b) = others(l);
            ranks[l] * ranks[a].min(ranks[b])
        })
        .unwrap();
    let (ma, mb) = others(l);
    let (rl, ra, rb) = (ranks[l], ranks[ma], ranks[mb]);
    let unfold = Mat::from_fn(rl, ra * rb, |i, j| {
        let (ia, ib) = (j % ra, j / ra);
        let mut idx = [0usize; 3];
        idx[l] = i;
        idx[ma] = ia;
        idx[mb] = ib;
        t.core_entry(idx[0], idx[1], idx[2])
    });
    let top = svd(&unfold);
    let tau2 = (eps * core_norm) * (eps * core_norm);
    let half = tau2 / T::of(2.0);
    let p = keep_for_tail(&top.s, T::one(), half);
    let per = if p > 0 { half / T::of_usize(p) } else { half };

    let mut cols_l = Vec::new();
    let mut cols_a = Vec::new();
    let mut cols_b = Vec::new();
    let mut weights = Vec::new();
    for j in 0..p {
        let sj = top.s[j];
        let vj = top.v.col(j);
        let inner = svd(&Mat::from_col_major(ra, rb, vj.to_vec()));
        let q = keep_for_tail(&inner.s, sj * sj, per);
        let ul = top.u.col(j).to_vec();
        for i in 0..q {
            weights.push(sj * inner.s[i]);
            cols_l.extend_from_slice(&ul);
            cols_a.extend_from_slice(inner.u.col(i));
            cols_b.extend_from_slice(inner.v.col(i));
        }
    }
    let rank = weights.len();
    if rank == 0 {
        return Ok(out);
    }
    let expand = |m: usize, small: &[T], r_m: usize| -> Vec<T> {
        let f = &t.factors[m];
        let mut big = vec![T::zero(); f.rows() * rank];
        gemm(T::one(), f.view(), MatRef::col_major(small, r_m, rank), T::zero(), &mut big, f.rows());
        big
    };
    let mut factors: [Vec<T>; 3] = Default::default();
    factors[l] = expand(l, &cols_l, rl);
    factors[ma] = expand(ma, &cols_a, ra);
    factors[mb] = expand(mb, &cols_b, rb);
    out = CanonicalTensor3::new(sizes, weights, factors)?;
    Ok(out)
}

/// Canonical rank reduction `t2c ∘ c2t`, both at threshold `eps`.
pub fn reduce_rank<T: Real>(t: &CanonicalTensor3<T>, eps: T) -> Result<CanonicalTensor3<T>> {
    if t.rank() == 0 {
        return Ok(t.clone());
    }
    t2c(&c2t_rhosvd(t, eps)?, eps)
}

fn others(l: usize) -> (usize, usize) {
    match l {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Smallest `k` with `scale · Σ_{j >= k} s_j² <= budget`.
fn keep_for_tail<T: Real>(s: &[T], scale: T, budget: T) -> usize {
    let mut tail = T::zero();
    let mut k = s.len();
    while k > 0 {
        let next = tail + scale * s[k - 1] * s[k - 1];
        if next > budget {
            break;
        }
        tail = next;
        k -= 1;
    }
    // Exactly zero singular values are always dropped.
    while k > 0 && s[k - 1] == T::zero() {
        k -= 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_for_tail_budget() {
        let s = [4.0f64, 2.0, 1.0, 0.5];
        assert_eq!(keep_for_tail(&s, 1.0, 0.0), 4);
        assert_eq!(keep_for_tail(&s, 1.0, 0.25), 3);
        assert_eq!(keep_for_tail(&s, 1.0, 1.25), 2);
        assert_eq!(keep_for_tail(&s, 1.0, 100.0), 0);
        assert_eq!(keep_for_tail(&[1.0f64, 0.0], 1.0, 0.0), 1);
    }

    #[test]
    fn rank_one_is_exact() {
        let t = CanonicalTensor3::rank_one(2.5f64, vec![1.0, 2.0, 3.0], vec![0.5, -1.0], vec![1.0, 1.0, 1.0, 2.0]);
        let tk = c2t_rhosvd(&t, 1e-12).unwrap();
        assert_eq!(tk.ranks(), [1, 1, 1]);
        let back = t2c(&tk, 1e-12).unwrap();
        assert_eq!(back.rank(), 1);
        for (a, b) in back.to_dense().iter().zip(t.to_dense()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_nonfinite() {
        let t = CanonicalTensor3::rank_one(1.0f64, vec![f64::NAN, 1.0], vec![1.0], vec![1.0]);
        assert!(matches!(c2t_rhosvd(&t, 1e-8), Err(Error::NonFinite(_))));
    }
}
