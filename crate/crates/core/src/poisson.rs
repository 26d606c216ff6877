//! Solvers for `(-Δ_h + κ²) u = f` on the grid with Dirichlet data.
//!
//! The spectral solver diagonalizes the operator with a 3D type-I discrete
//! sine transform. DST-I of length `m` is computed through a complex FFT of
//! the odd extension `[0, x, 0, -rev(x)]` of length `2(m + 1)`; two real
//! lines share one complex transform. The conjugate gradient solver is
//! matrix-free and serves as a cross-check.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::canonical::CanonicalTensor3;
use crate::error::{Error, Result};
use crate::field::GridFunction3;
use crate::grid::Grid3;
use crate::laplacian::{apply_stencil_box, DiscreteLaplacian};
use crate::molecule::Molecule;
use crate::scalar::Real;

/// Unnormalized DST-I: `S_k = Σ_j x_j sin(π (j+1)(k+1) / (m+1))`.
/// Applying it twice multiplies by `(m + 1) / 2`.
#[derive(Clone)]
pub struct Dst1<T: Real> {
    m: usize,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Dst1<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dst1").field("m", &self.m).finish()
    }
}

impl<T: Real> Dst1<T> {
    pub fn new(m: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        Self { m, fft }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    fn buffers(&self) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        let z = Complex::new(T::zero(), T::zero());
        (vec![z; 2 * (self.m + 1)], vec![z; self.fft.get_inplace_scratch_len()])
    }

    /// Transforms `a` and, when given, `b` in one complex FFT. With
    /// `z = a + i b` odd-extended, `FFT(z)_k = 2 S_b(k) - 2i S_a(k)`.
    fn pair(&self, a: &mut [T], b: Option<&mut [T]>, buf: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let m = self.m;
        let zero = Complex::new(T::zero(), T::zero());
        buf[0] = zero;
        buf[m + 1] = zero;
        match &b {
            Some(b) => {
                for j in 0..m {
                    let v = Complex::new(a[j], b[j]);
                    buf[j + 1] = v;
                    buf[2 * m + 1 - j] = -v;
                }
            }
            None => {
                for j in 0..m {
                    let v = Complex::new(a[j], T::zero());
                    buf[j + 1] = v;
                    buf[2 * m + 1 - j] = -v;
                }
            }
        }
        self.fft.process_with_scratch(buf, scratch);
        let half = T::of(-0.5);
        for k in 0..m {
            a[k] = half * buf[k + 1].im;
        }
        if let Some(b) = b {
            for k in 0..m {
                b[k] = buf[k + 1].re / T::of(2.0);
            }
        }
    }

    /// In-place transform of one line.
    pub fn transform(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.m);
        let (mut buf, mut scratch) = self.buffers();
        self.pair(x, None, &mut buf, &mut scratch);
    }

    /// Transforms every contiguous length-`m` line of `data`.
    pub fn transform_lines(&self, data: &mut [T]) {
        let m = self.m;
        assert_eq!(data.len() % m, 0);
        data.par_chunks_mut(2 * m).for_each_init(
            || self.buffers(),
            |(buf, scratch), chunk| {
                let (a, b) = chunk.split_at_mut(m);
                let b = if b.is_empty() { None } else { Some(b) };
                self.pair(a, b, buf, scratch);
            },
        );
    }
}

/// Direct `O(m²)` DST-I, used as a test oracle.
pub fn dst1_direct<T: Real>(x: &[T]) -> Vec<T> {
    let m = x.len();
    let den = T::of_usize(m + 1);
    (0..m)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| v * (T::PI() * T::of_usize((j + 1) * (k + 1)) / den).sin())
                .sum()
        })
        .collect()
}

/// Cyclic axis rotation of an `m³` array: axis 2 becomes the fastest.
fn rotate<T: Real>(src: &[T], dst: &mut [T], m: usize) {
    let m2 = m * m;
    dst.par_chunks_mut(m2).enumerate().for_each(|(a, plane)| {
        for i3 in 0..m {
            for i2 in 0..m {
                plane[i2 + m * i3] = src[a + m * i2 + m2 * i3];
            }
        }
    });
}

/// Unnormalized DST-I along all three axes of an `m³` array.
pub fn dst3<T: Real>(data: &mut [T], dst: &Dst1<T>) {
    let m = dst.len();
    assert_eq!(data.len(), m * m * m);
    let mut tmp = vec![T::zero(); data.len()];
    for _ in 0..3 {
        dst.transform_lines(data);
        rotate(data, &mut tmp, m);
        data.copy_from_slice(&tmp);
    }
}

/// Solves `(-Δ + κ²) u = f` on an `m³` box with zero ghosts and spacing `h`.
pub fn spectral_box<T: Real>(f: &[T], m: usize, h: T, kappa: T) -> Vec<T> {
    let dst = Dst1::new(m);
    let mut u = f.to_vec();
    dst3(&mut u, &dst);
    let s = T::of(2.0) / (h * h);
    let lam: Vec<T> = (1..=m)
        .map(|j| s * (T::one() - (T::PI() * T::of_usize(j) / T::of_usize(m + 1)).cos()))
        .collect();
    let k2 = kappa * kappa;
    let norm = (T::of(2.0) / T::of_usize(m + 1)).powi(3);
    u.par_chunks_mut(m * m).enumerate().for_each(|(j3, plane)| {
        for j2 in 0..m {
            for j1 in 0..m {
                let d = lam[j1] + lam[j2] + lam[j3] + k2;
                plane[j1 + m * j2] = plane[j1 + m * j2] * norm / d;
            }
        }
    });
    dst3(&mut u, &dst);
    u
}

/// `‖(-Δ + κ²) u - f‖₂ / ‖f‖₂` on an `m³` box (absolute when `f = 0`).
pub fn relative_residual<T: Real>(u: &[T], f: &[T], m: usize, h: T, kappa: T) -> f64 {
    let mut au = vec![T::zero(); u.len()];
    apply_stencil_box(m, T::one() / (h * h), kappa * kappa, u, &mut au);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (a, b) in au.iter().zip(f) {
        let r = -a.to_f64_lossy() - b.to_f64_lossy();
        num += r * r;
        den += b.to_f64_lossy().powi(2);
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Conjugate gradients for `(-Δ + κ²) u = f` on an `m³` box.
pub fn cg_box<T: Real>(f: &[T], m: usize, h: T, kappa: T, tol: f64, max_iter: usize) -> Result<(Vec<T>, usize, f64)> {
    let s = T::one() / (h * h);
    let k2 = kappa * kappa;
    let apply = |x: &[T], out: &mut [T]| {
        apply_stencil_box(m, s, k2, x, out);
        out.par_iter_mut().for_each(|v| *v = -*v);
    };
    let dot = |a: &[T], b: &[T]| -> T { a.par_iter().zip(b).map(|(x, y)| *x * *y).sum() };
    let fnorm = dot(f, f).sqrt();
    let mut u = vec![T::zero(); f.len()];
    if fnorm == T::zero() {
        return Ok((u, 0, 0.0));
    }
    let mut r = f.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); f.len()];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        u.par_iter_mut().zip(&p).for_each(|(x, d)| *x = *x + alpha * *d);
        r.par_iter_mut().zip(&ap).for_each(|(x, d)| *x = *x - alpha * *d);
        let rr_new = dot(&r, &r);
        let rel = (rr_new.sqrt() / fnorm).to_f64_lossy();
        if rel <= tol {
            return Ok((u, it, rel));
        }
        let beta = rr_new / rr;
        p.par_iter_mut().zip(&r).for_each(|(x, d)| *x = *d + beta * *x);
        rr = rr_new;
    }
    Err(Error::NotConverged { iterations: max_iter, residual: (rr.sqrt() / fnorm).to_f64_lossy() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverMethod {
    /// Direct DST-I diagonalization.
    Spectral,
    /// Conjugate gradients to relative residual `tol`.
    Cg { tol: f64, max_iter: usize },
}

impl SolverMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spectral => "spectral",
            Self::Cg { .. } => "cg",
        }
    }
}

/// Dirichlet data on the outer node layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Boundary<T> {
    /// All unknowns live on the full grid with zero ghost values.
    Homogeneous,
    /// The face nodes of the field are prescribed; only those values are read.
    Dirichlet(GridFunction3<T>),
}

fn on_face(idx: [usize; 3], n: usize) -> bool {
    idx.iter().any(|&i| i == 0 || i == n - 1)
}

impl<T: Real> Boundary<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Homogeneous => "homogeneous",
            Self::Dirichlet(_) => "dirichlet",
        }
    }

    /// Face values of a canonical tensor on `grid`.
    pub fn trace_of(t: &CanonicalTensor3<T>, grid: &Grid3<T>) -> Result<Self> {
        let n = grid.n();
        if t.sizes() != [n; 3] {
            return Err(Error::ShapeMismatch(format!("tensor of size {:?} on an n={n} grid", t.sizes())));
        }
        Ok(Self::Dirichlet(GridFunction3::from_fn(*grid, |idx| {
            if on_face(idx, n) {
                t.entry(idx)
            } else {
                T::zero()
            }
        })))
    }

    /// Screened Coulomb sum `Σ z_ν exp(-κ r) / r` on the faces.
    pub fn analytic(m: &Molecule, grid: &Grid3<T>, kappa: f64) -> Self {
        let n = grid.n();
        Self::Dirichlet(GridFunction3::from_fn(*grid, |idx| {
            if !on_face(idx, n) {
                return T::zero();
            }
            let p = grid.point(idx).map(|v| v.to_f64_lossy());
            let v: f64 = m
                .atoms()
                .iter()
                .map(|a| {
                    let r = (0..3).map(|l| (p[l] - a.position[l]).powi(2)).sum::<f64>().sqrt();
                    a.charge * (-kappa * r).exp() / r
                })
                .sum();
            T::of(v)
        }))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub method: &'static str,
    pub boundary: &'static str,
    /// Relative residual of the system actually solved.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `(-Δ_h + κ²) u = f` with the Laplacian's grid and screening.
pub fn poisson_solve<T: Real>(
    rhs: &GridFunction3<T>,
    lap: &DiscreteLaplacian<T>,
    bc: &Boundary<T>,
    method: SolverMethod,
) -> Result<(GridFunction3<T>, SolveReport)> {
    let grid = *lap.grid();
    if rhs.grid() != &grid {
        return Err(Error::ShapeMismatch("right-hand side and operator live on different grids".into()));
    }
    if !rhs.all_finite() {
        return Err(Error::NonFinite("poisson right-hand side"));
    }
    if let SolverMethod::Cg { tol, max_iter } = method {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument(format!("cg needs tol > 0 and max_iter > 0, got {tol}, {max_iter}")));
        }
    }
    let n = grid.n();
    let h = grid.h();
    let kappa = lap.kappa();
    let run = |f: &[T], m: usize| -> Result<(Vec<T>, usize, f64)> {
        match method {
            SolverMethod::Spectral => {
                let u = spectral_box(f, m, h, kappa);
                let res = relative_residual(&u, f, m, h, kappa);
                Ok((u, 0, res))
            }
            SolverMethod::Cg { tol, max_iter } => cg_box(f, m, h, kappa, tol, max_iter),
        }
    };
    let (values, iterations, residual) = match bc {
        Boundary::Homogeneous => run(rhs.values(), n)?,
        Boundary::Dirichlet(g) => {
            if g.grid() != &grid {
                return Err(Error::ShapeMismatch("boundary data lives on a different grid".into()));
            }
            let m = n - 2;
            let s = lap.inv_h2();
            // Lifting: known face neighbours move to the right-hand side.
            let mut f = vec![T::zero(); m * m * m];
            f.par_chunks_mut(m * m).enumerate().for_each(|(j3, plane)| {
                for j2 in 0..m {
                    for j1 in 0..m {
                        let idx = [j1 + 1, j2 + 1, j3 + 1];
                        let mut v = rhs.get(idx);
                        for l in 0..3 {
                            for nb in [idx[l] - 1, idx[l] + 1] {
                                if nb == 0 || nb == n - 1 {
                                    let mut q = idx;
                                    q[l] = nb;
                                    v = v + s * g.get(q);
                                }
                            }
                        }
                        plane[j1 + m * j2] = v;
                    }
                }
            });
            let (u, it, res) = run(&f, m)?;
            let mut full = g.values().to_vec();
            for (k, x) in full.iter_mut().enumerate() {
                let idx = grid.unflat(k);
                if !on_face(idx, n) {
                    *x = u[(idx[0] - 1) + m * ((idx[1] - 1) + m * (idx[2] - 1))];
                }
            }
            (full, it, res)
        }
    };
    let out = GridFunction3::new(grid, values)?;
    if !out.all_finite() {
        return Err(Error::NonFinite("poisson solution"));
    }
    Ok((out, SolveReport { method: method.name(), boundary: bc.name(), residual, iterations }))
}

/// [`poisson_solve`] with a canonical right-hand side, materialized first.
pub fn poisson_solve_canonical<T: Real>(
    rhs: &CanonicalTensor3<T>,
    lap: &DiscreteLaplacian<T>,
    bc: &Boundary<T>,
    method: SolverMethod,
) -> Result<(GridFunction3<T>, SolveReport)> {
    let n = lap.grid().n();
    if rhs.sizes() != [n; 3] {
        return Err(Error::ShapeMismatch(format!("tensor of size {:?} on an n={n} grid", rhs.sizes())));
    }
    poisson_solve(&GridFunction3::new(*lap.grid(), rhs.to_dense())?, lap, bc, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fft_dst_matches_direct() {
        for m in [1usize, 2, 5, 16, 31] {
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = dst1_direct(&x);
            let mut got = x.clone();
            Dst1::new(m).transform(&mut got);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "m={m}");
            }
            // Paired lines, odd line count.
            let mut lines: Vec<f64> = (0..3 * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want: Vec<f64> = lines.chunks(m).flat_map(dst1_direct).collect();
            Dst1::new(m).transform_lines(&mut lines);
            for (a, b) in lines.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn random_field(n: usize, seed: u64) -> GridFunction3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridFunction3::from_fn(Grid3::new(3.0, n).unwrap(), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn spectral_inverts_stencil() {
        let u = random_field(12, 1);
        let lap = DiscreteLaplacian::unscreened(*u.grid());
        let f: Vec<f64> = lap.apply_dense(u.values()).iter().map(|v| -v).collect();
        let f = GridFunction3::new(*u.grid(), f).unwrap();
        let (got, rep) = poisson_solve(&f, &lap, &Boundary::Homogeneous, SolverMethod::Spectral).unwrap();
        assert!(rep.residual < 1e-12, "{rep:?}");
        let err = got.values().iter().zip(u.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nrm = u.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / nrm < 1e-10);
    }

    #[test]
    fn cg_and_spectral_agree_with_screening() {
        let g = Grid3::new(4.0f64, 15).unwrap();
        let lap = DiscreteLaplacian::new(g, 0.1).unwrap();
        let f = GridFunction3::from_fn(g, |_| 1.0);
        let (a, _) = poisson_solve(&f, &lap, &Boundary::Homogeneous, SolverMethod::Spectral).unwrap();
        let (b, rep) = poisson_solve(&f, &lap, &Boundary::Homogeneous, SolverMethod::Cg { tol: 1e-13, max_iter: 2000 }).unwrap();
        assert!(rep.iterations > 0);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let g = Grid3::new(4.0f64, 15).unwrap();
        let lap = DiscreteLaplacian::unscreened(g);
        let f = GridFunction3::from_fn(g, |[i, _, _]| i as f64);
        let e = poisson_solve(&f, &lap, &Boundary::Homogeneous, SolverMethod::Cg { tol: 1e-14, max_iter: 2 }).unwrap_err();
        assert!(matches!(e, Error::NotConverged { iterations: 2, .. }));
        assert!(poisson_solve(&f, &lap, &Boundary::Homogeneous, SolverMethod::Cg { tol: 0.0, max_iter: 2 }).is_err());
    }

    #[test]
    fn dirichlet_lifting_reproduces_harmonic_field() {
        // u = x - 2y + 3z + xy is discretely harmonic (the 3-point stencil is
        // exact on quadratics without squared terms).
        let g = Grid3::new(2.0f64, 11).unwrap();
        let u = GridFunction3::from_fn(g, |idx| {
            let [x, y, z] = g.point(idx);
            x - 2.0 * y + 3.0 * z + x * y
        });
        let lap = DiscreteLaplacian::unscreened(g);
        let zero = GridFunction3::zeros(g);
        for method in [SolverMethod::Spectral, SolverMethod::Cg { tol: 1e-13, max_iter: 1000 }] {
            let (got, _) = poisson_solve(&zero, &lap, &Boundary::Dirichlet(u.clone()), method).unwrap();
            for (a, b) in got.values().iter().zip(u.values()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_of_canonical() {
        let g = Grid3::new(1.0, 5).unwrap();
        let t = CanonicalTensor3::rank_one(2.0, vec![1.0; 5], vec![1.0; 5], vec![1.0; 5]);
        let Boundary::Dirichlet(f) = Boundary::trace_of(&t, &g).unwrap() else { panic!() };
        assert_eq!(f.get([0, 2, 2]), 2.0);
        assert_eq!(f.get([2, 2, 2]), 0.0);
    }
}
