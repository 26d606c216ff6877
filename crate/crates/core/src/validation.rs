//! Brute-force oracles and error metrics.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::GridFunction3;
use crate::grid::Grid3;
use crate::molecule::Molecule;
use crate::quadrature::SincQuadrature;
use crate::rs::snap_to_grid;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
pub enum OracleKernel<'a, T> {
    /// `Σ z / ‖x - x_ν‖` at the true atom positions.
    ExactNewton,
    /// The quadrature kernel with every atom on its nearest node, which is
    /// the discretization the RS tensor represents.
    GaussianSum(&'a SincQuadrature<T>),
}

/// What to do with grid nodes that coincide with an atom in exact mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularPolicy {
    Error,
    /// Flag the node, store 0 there and leave it out of the norms.
    Exclude,
}

#[derive(Clone, Debug)]
pub struct OracleField<T> {
    pub field: GridFunction3<T>,
    /// Flat indices of flagged singular nodes.
    pub singular: Vec<usize>,
}

/// Direct `O(N n³)` potential sum.
pub fn direct_sum_oracle<T: Real>(
    m: &Molecule,
    grid: &Grid3<T>,
    kernel: OracleKernel<'_, T>,
    policy: SingularPolicy,
) -> Result<OracleField<T>> {
    match kernel {
        OracleKernel::GaussianSum(q) => Ok(OracleField { field: gaussian_sum(m, grid, q)?, singular: Vec::new() }),
        OracleKernel::ExactNewton => exact_newton(m, grid, policy),
    }
}

/// Radial lookup `K[s] = Σ_k c_k exp(-t_k² h² s)` for integer squared
/// node distances `s`.
fn radial_table<T: Real>(q: &SincQuadrature<T>, h: f64, smax: usize) -> Vec<f64> {
    let t: Vec<f64> = q.nodes().iter().map(|v| v.to_f64_lossy()).collect();
    let c: Vec<f64> = q.weights().iter().map(|v| v.to_f64_lossy()).collect();
    (0..=smax)
        .into_par_iter()
        .map(|s| {
            let r2 = h * h * s as f64;
            t.iter().zip(&c).map(|(t, c)| c * (-(t * t) * r2).exp()).sum()
        })
        .collect()
}

fn gaussian_sum<T: Real>(m: &Molecule, grid: &Grid3<T>, q: &SincQuadrature<T>) -> Result<GridFunction3<T>> {
    let n = grid.n();
    let snapped = snap_to_grid(m, grid)?;
    let table = radial_table(q, grid.h().to_f64_lossy(), 3 * (n - 1) * (n - 1));
    let atoms: Vec<([usize; 3], f64)> = snapped.iter().zip(m.atoms()).map(|(s, a)| (s.index, a.charge)).collect();
    let mut out = vec![T::zero(); grid.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(i3, plane)| {
        let mut acc = vec![0.0f64; n * n];
        for &(c, z) in &atoms {
            let d3 = c[2].abs_diff(i3).pow(2);
            for i2 in 0..n {
                let base = d3 + c[1].abs_diff(i2).pow(2);
                let row = &mut acc[i2 * n..(i2 + 1) * n];
                for (i1, v) in row.iter_mut().enumerate() {
                    *v += z * table[base + c[0].abs_diff(i1).pow(2)];
                }
            }
        }
        for (o, a) in plane.iter_mut().zip(acc) {
            *o = T::of(a);
        }
    });
    GridFunction3::new(*grid, out)
}

fn exact_newton<T: Real>(m: &Molecule, grid: &Grid3<T>, policy: SingularPolicy) -> Result<OracleField<T>> {
    let n = grid.n();
    let coords: Vec<f64> = grid.coords().iter().map(|v| v.to_f64_lossy()).collect();
    let tiny = 1e-12 * grid.h().to_f64_lossy();
    let mut singular: Vec<(usize, usize)> = Vec::new();
    for (ai, a) in m.atoms().iter().enumerate() {
        let b = grid.half_width().to_f64_lossy();
        if a.position.iter().all(|x| x.abs() <= b) {
            let idx = a.position.map(|x| nearest(&coords, x));
            let d2: f64 = (0..3).map(|l| (coords[idx[l]] - a.position[l]).powi(2)).sum();
            if d2.sqrt() <= tiny {
                singular.push((grid.flat(idx), ai));
            }
        }
    }
    if policy == SingularPolicy::Error {
        if let Some(&(f, atom)) = singular.first() {
            return Err(Error::SingularNode { node: grid.unflat(f), atom });
        }
    }
    let mut out = vec![T::zero(); grid.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(i3, plane)| {
        for i2 in 0..n {
            for i1 in 0..n {
                let p = [coords[i1], coords[i2], coords[i3]];
                let mut s = 0.0f64;
                for a in m.atoms() {
                    let r2: f64 = (0..3).map(|l| (p[l] - a.position[l]).powi(2)).sum();
                    let r = r2.sqrt();
                    if r > tiny {
                        s += a.charge / r;
                    }
                }
                plane[i1 + n * i2] = T::of(s);
            }
        }
    });
    let mut singular: Vec<usize> = singular.into_iter().map(|(f, _)| f).collect();
    for &f in &singular {
        out[f] = T::zero();
    }
    singular.sort_unstable();
    singular.dedup();
    Ok(OracleField { field: GridFunction3::new(*grid, out)?, singular })
}

fn nearest(coords: &[f64], x: f64) -> usize {
    let i = coords.partition_point(|&c| c < x);
    if i == 0 {
        0
    } else if i == coords.len() {
        coords.len() - 1
    } else if (coords[i] - x).abs() < (x - coords[i - 1]).abs() {
        i
    } else {
        i - 1
    }
}

/// Oracle values at selected nodes only.
pub fn oracle_at_nodes<T: Real>(m: &Molecule, grid: &Grid3<T>, q: &SincQuadrature<T>, nodes: &[[usize; 3]]) -> Result<Vec<T>> {
    let snapped = snap_to_grid(m, grid)?;
    let h = grid.h().to_f64_lossy();
    Ok(nodes
        .iter()
        .map(|idx| {
            let v: f64 = snapped
                .iter()
                .zip(m.atoms())
                .map(|(s, a)| {
                    let r2 = h * h * (0..3).map(|l| (s.index[l].abs_diff(idx[l]) as f64).powi(2)).sum::<f64>();
                    a.charge * q.eval_sq(T::of(r2)).to_f64_lossy()
                })
                .sum();
            T::of(v)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    /// `sqrt(h³ Σ d²)`.
    pub discrete_l2: f64,
    /// Unweighted `sqrt(Σ d²)`.
    pub rss: f64,
    /// `‖d‖₂ / ‖b‖₂`.
    pub relative_l2: f64,
    pub max_abs: f64,
    /// Max over nodes farther than one grid unit from every atom.
    pub max_abs_excluding_cores: f64,
    pub excluded_nodes: usize,
    pub n: usize,
    pub b: f64,
    pub h: f64,
    /// Extra key=value pairs echoed in the output.
    pub echo: Vec<(String, String)>,
}

/// Error metrics of `a` against the reference `b`. With `cores`, nodes within
/// Euclidean distance `h` of an atom are left out of the core-excluded max.
/// Nodes listed in `skip` are left out of every metric.
pub fn compare<T: Real>(a: &GridFunction3<T>, b: &GridFunction3<T>, cores: Option<&Molecule>) -> Result<ErrorReport> {
    compare_skipping(a, b, cores, &[])
}

pub fn compare_skipping<T: Real>(
    a: &GridFunction3<T>,
    b: &GridFunction3<T>,
    cores: Option<&Molecule>,
    skip: &[usize],
) -> Result<ErrorReport> {
    a.same_grid(b)?;
    let grid = *a.grid();
    let n = grid.n();
    let h = grid.h().to_f64_lossy();
    let mut core_mask = vec![false; grid.len()];
    if let Some(m) = cores {
        let coords: Vec<f64> = grid.coords().iter().map(|v| v.to_f64_lossy()).collect();
        for at in m.atoms() {
            let lo = at.position.map(|x| coords.partition_point(|&c| c < x - h * (1.0 + 1e-12)));
            let hi = at.position.map(|x| coords.partition_point(|&c| c <= x + h * (1.0 + 1e-12)));
            for i3 in lo[2]..hi[2] {
                for i2 in lo[1]..hi[1] {
                    for i1 in lo[0]..hi[0] {
                        let d2: f64 = [i1, i2, i3].iter().zip(&at.position).map(|(&i, x)| (coords[i] - x).powi(2)).sum();
                        if d2 <= h * h * (1.0 + 1e-12) {
                            core_mask[i1 + n * (i2 + n * i3)] = true;
                        }
                    }
                }
            }
        }
    }
    let mut skip_mask = vec![false; grid.len()];
    for &f in skip {
        skip_mask[f] = true;
    }
    let (mut ss, mut sb, mut mx, mut mx_out) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut excluded = 0usize;
    for (k, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        if skip_mask[k] {
            excluded += 1;
            continue;
        }
        let d = (x.to_f64_lossy() - y.to_f64_lossy()).abs();
        ss += d * d;
        sb += y.to_f64_lossy().powi(2);
        mx = mx.max(d);
        if core_mask[k] {
            excluded += 1;
        } else {
            mx_out = mx_out.max(d);
        }
    }
    let report = ErrorReport {
        discrete_l2: (h * h * h * ss).sqrt(),
        rss: ss.sqrt(),
        relative_l2: if sb > 0.0 { (ss / sb).sqrt() } else { ss.sqrt() },
        max_abs: mx,
        max_abs_excluding_cores: mx_out,
        excluded_nodes: excluded,
        n,
        b: grid.half_width().to_f64_lossy(),
        h,
        echo: Vec::new(),
    };
    if !report.is_well_formed() {
        return Err(Error::NonFinite("error report"));
    }
    Ok(report)
}

impl ErrorReport {
    pub fn with_echo(mut self, key: &str, value: impl ToString) -> Self {
        self.echo.push((key.to_string(), value.to_string()));
        self
    }

    /// All metrics finite and non-negative, core-excluded max within the max.
    pub fn is_well_formed(&self) -> bool {
        let v = [self.discrete_l2, self.rss, self.relative_l2, self.max_abs, self.max_abs_excluding_cores];
        v.iter().all(|x| x.is_finite() && *x >= 0.0) && self.max_abs_excluding_cores <= self.max_abs
    }

    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "b={:e}", self.b);
        let _ = writeln!(s, "h={:e}", self.h);
        let _ = writeln!(s, "discrete_l2={:e}", self.discrete_l2);
        let _ = writeln!(s, "rss={:e}", self.rss);
        let _ = writeln!(s, "relative_l2={:e}", self.relative_l2);
        let _ = writeln!(s, "max_abs={:e}", self.max_abs);
        let _ = writeln!(s, "max_abs_excluding_cores={:e}", self.max_abs_excluding_cores);
        let _ = writeln!(s, "excluded_nodes={}", self.excluded_nodes);
        for (k, v) in &self.echo {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_key_values())?;
        Ok(())
    }
}

impl std::fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "error report (n={}, b={} Å, h={:.6} Å)", self.n, self.b, self.h)?;
        writeln!(f, "  discrete L2 (h^3 weighted)  {:.4e}", self.discrete_l2)?;
        writeln!(f, "  root-sum-square             {:.4e}", self.rss)?;
        writeln!(f, "  relative L2                 {:.4e}", self.relative_l2)?;
        writeln!(f, "  max abs                     {:.4e}", self.max_abs)?;
        write!(f, "  max abs outside cores       {:.4e}", self.max_abs_excluding_cores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::{born_ion, Atom};

    #[test]
    fn exact_born_value() {
        let g = Grid3::new(4.0f64, 9).unwrap(); // h = 1
        let o = direct_sum_oracle(&born_ion(), &g, OracleKernel::ExactNewton, SingularPolicy::Exclude).unwrap();
        assert_eq!(o.singular, vec![g.flat([4, 4, 4])]);
        assert!((o.field.get([6, 4, 4]) - 0.5).abs() < 1e-15);
        assert!(matches!(
            direct_sum_oracle(&born_ion(), &g, OracleKernel::ExactNewton, SingularPolicy::Error),
            Err(Error::SingularNode { atom: 0, .. })
        ));
    }

    #[test]
    fn antisymmetric_dipole() {
        let g = Grid3::new(4.0f64, 10).unwrap();
        let m = Molecule::new(
            "dipole",
            vec![
                Atom { position: [-1.3, 0.2, 0.1], charge: 1.0, radius: 1.0 },
                Atom { position: [1.3, 0.2, 0.1], charge: -1.0, radius: 1.0 },
            ],
        )
        .unwrap();
        let o = direct_sum_oracle(&m, &g, OracleKernel::ExactNewton, SingularPolicy::Error).unwrap();
        for i3 in 0..10 {
            for i2 in 0..10 {
                for i1 in 0..10 {
                    let a = o.field.get([i1, i2, i3]);
                    let b = o.field.get([9 - i1, i2, i3]);
                    assert!((a + b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn constant_difference_closed_form() {
        let g = Grid3::new(2.0f64, 7).unwrap();
        let a = GridFunction3::from_fn(g, |[i, j, k]| (i + 2 * j + 3 * k) as f64);
        let b = GridFunction3::from_fn(g, |idx| a.get(idx) + 0.25);
        let r = compare(&b, &a, None).unwrap();
        assert!((r.max_abs - 0.25).abs() < 1e-14);
        let h = g.h();
        assert!((r.discrete_l2 - 0.25 * (h.powi(3) * 343.0).sqrt()).abs() < 1e-13);
        let z = compare(&a, &a, Some(&born_ion())).unwrap();
        assert_eq!((z.discrete_l2, z.max_abs, z.max_abs_excluding_cores), (0.0, 0.0, 0.0));
        // Born ion at the origin of a 7-grid with h = 2/3: the center and its
        // six face neighbours are within h.
        assert_eq!(z.excluded_nodes, 7);
    }
}
