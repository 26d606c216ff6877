//! Range-separated (RS) canonical tensors of collective potentials.
//!
//! The long-range part is one global canonical tensor on the `n`-grid; the
//! short-range part is a single compact reference tensor plus a list of
//! (center node, charge) pairs. An entry is
//! `long(i) + Σ_{ν : |i - c_ν|∞ <= w} z_ν · short_ref(|i - c_ν|)`,
//! where `w` is the short window radius.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::canonical::CanonicalTensor3;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::kernel::ReferenceKernel;
use crate::molecule::Molecule;
use crate::scalar::Real;
use crate::tucker::reduce_rank;

/// Nearest grid node of an atom and the residual offset in Å.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapped {
    pub index: [usize; 3],
    pub offset: [f64; 3],
}

/// Snaps every atom to its nearest node. Exact midpoints round away from
/// the box center.
pub fn snap_to_grid<T: Real>(m: &Molecule, grid: &Grid3<T>) -> Result<Vec<Snapped>> {
    let b = grid.half_width().to_f64_lossy();
    let n = grid.n();
    let nm1 = (n - 1) as f64;
    let center = nm1 / 2.0;
    m.atoms()
        .iter()
        .enumerate()
        .map(|(ai, a)| {
            let mut index = [0usize; 3];
            let mut offset = [0.0; 3];
            for l in 0..3 {
                let x = a.position[l];
                if !(x.abs() <= b * (1.0 + 1e-12)) {
                    return Err(Error::AtomOutsideBox { atom: ai });
                }
                let s = (x / b * nm1 + nm1) / 2.0;
                let fl = s.floor();
                let frac = s - fl;
                let up = if (frac - 0.5).abs() <= 1e-9 { fl + 0.5 >= center } else { frac > 0.5 };
                let i = ((if up { fl + 1.0 } else { fl }) as usize).min(n - 1);
                index[l] = i;
                offset[l] = x - grid.coord(i).to_f64_lossy();
            }
            Ok(Snapped { index, offset })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Long,
    Short,
    Both,
}

/// Windowed copy of the reference tensor centered at node `center`: mode
/// `l` vectors are the length-`n` slices of the `2n` reference vectors
/// starting at `n - center_l`.
pub fn shift_and_window<T: Real>(kernel: &ReferenceKernel<T>, center: [usize; 3], part: Part) -> Result<CanonicalTensor3<T>> {
    let n = kernel.grid().n();
    kernel.grid().check_index(center)?;
    let cols = match part {
        Part::Both => 0..kernel.rank(),
        Part::Long => 0..kernel.require_split()?.long_rank,
        Part::Short => kernel.require_split()?.long_rank..kernel.rank(),
    };
    let mut out = CanonicalTensor3::zeros([n; 3]);
    for k in cols {
        let w = kernel.wide_column(k);
        let s = [0, 1, 2].map(|l| n - center[l]);
        assert!(s.iter().all(|&st| st + n <= w.len()), "window out of range");
        out.push_column(
            kernel.quadrature().weights()[k],
            &w[s[0]..s[0] + n],
            &w[s[1]..s[1] + n],
            &w[s[2]..s[2] + n],
        );
    }
    Ok(out)
}

/// Uniform-cell index over short-list centers.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    cell: usize,
    radius: usize,
    cells: HashMap<[usize; 3], Vec<usize>>,
}

impl SpatialIndex {
    pub fn new(centers: &[[usize; 3]], radius: usize) -> Self {
        let cell = radius.max(1);
        let mut cells: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for (i, c) in centers.iter().enumerate() {
            cells.entry(c.map(|v| v / cell)).or_default().push(i);
        }
        Self { cell, radius, cells }
    }

    /// Calls `f(j)` for every center within ∞-distance `radius` of `idx`,
    /// inspecting at most 27 cells.
    pub fn for_each_near(&self, centers: &[[usize; 3]], idx: [usize; 3], mut f: impl FnMut(usize)) {
        let k = idx.map(|v| v / self.cell);
        for d2 in -1i64..=1 {
            for d1 in -1i64..=1 {
                for d0 in -1i64..=1 {
                    let key = [k[0] as i64 + d0, k[1] as i64 + d1, k[2] as i64 + d2];
                    if key.iter().any(|&v| v < 0) {
                        continue;
                    }
                    if let Some(list) = self.cells.get(&key.map(|v| v as usize)) {
                        for &j in list {
                            let c = centers[j];
                            if (0..3).all(|l| c[l].abs_diff(idx[l]) <= self.radius) {
                                f(j);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RsTensor<T> {
    grid: Grid3<T>,
    long: CanonicalTensor3<T>,
    short_reference: CanonicalTensor3<T>,
    centers: Vec<[usize; 3]>,
    charges: Vec<T>,
    gamma: usize,
    pre_compression_rank: usize,
    index: SpatialIndex,
}

/// Assembles the RS tensor of a molecule.
///
/// The long part concatenates `z_ν` times the windowed long columns of every
/// atom (rank `N · R_l`) and is then compressed once by RHOSVD + T2C at
/// `eps_reduce`. The compressed tensor is kept only if its rank is lower.
pub fn assemble_collective<T: Real>(m: &Molecule, kernel: &ReferenceKernel<T>, eps_reduce: T) -> Result<RsTensor<T>> {
    let uncompressed = assemble_uncompressed(m, kernel)?;
    uncompressed.compressed(eps_reduce)
}

/// As [`assemble_collective`] without the compression step.
pub fn assemble_uncompressed<T: Real>(m: &Molecule, kernel: &ReferenceKernel<T>) -> Result<RsTensor<T>> {
    let split = *kernel.require_split()?;
    let grid = *kernel.grid();
    let n = grid.n();
    let snapped = snap_to_grid(m, &grid)?;
    let required = split.gamma as f64 / 2.0;
    for (ai, s) in snapped.iter().enumerate() {
        let actual = s.index.iter().map(|&i| i.min(n - 1 - i)).min().unwrap() as f64;
        if actual < required {
            return Err(Error::MarginViolation { atom: ai, required, actual });
        }
    }
    let centers: Vec<[usize; 3]> = snapped.iter().map(|s| s.index).collect();
    let charges: Vec<T> = m.atoms().iter().map(|a| T::of(a.charge)).collect();

    let rl = split.long_rank;
    let weights = kernel.quadrature().weights();
    let total = centers.len() * rl;
    let mut xi = Vec::with_capacity(total);
    let mut factors: [Vec<T>; 3] = [0, 1, 2].map(|_| Vec::with_capacity(total * n));
    for (c, &z) in centers.iter().zip(&charges) {
        for k in 0..rl {
            xi.push(z * weights[k]);
            let w = kernel.wide_column(k);
            for l in 0..3 {
                let s = n - c[l];
                factors[l].extend_from_slice(&w[s..s + n]);
            }
        }
    }
    let long = CanonicalTensor3::new([n; 3], xi, factors)?;

    let radius = split.gamma.min(n - 1);
    let short_reference = short_reference_from(kernel, radius)?;
    let index = SpatialIndex::new(&centers, radius);
    Ok(RsTensor {
        grid,
        long,
        short_reference,
        centers,
        charges,
        gamma: split.gamma,
        pre_compression_rank: total,
        index,
    })
}

/// Half profiles `g_k(o)`, `o = 0..=radius`, of the short columns.
fn short_reference_from<T: Real>(kernel: &ReferenceKernel<T>, radius: usize) -> Result<CanonicalTensor3<T>> {
    let split = kernel.require_split()?;
    let c0 = kernel.wide_center();
    let mut out = CanonicalTensor3::zeros([radius + 1; 3]);
    for k in split.long_rank..kernel.rank() {
        let half = &kernel.wide_column(k)[c0..c0 + radius + 1];
        out.push_column(kernel.quadrature().weights()[k], half, half, half);
    }
    Ok(out)
}

impl<T: Real> RsTensor<T> {
    /// Compresses the long part, keeping the result only if it lowers the rank.
    pub fn compressed(mut self, eps_reduce: T) -> Result<Self> {
        if self.long.rank() > 0 {
            let reduced = reduce_rank(&self.long, eps_reduce)?;
            if reduced.rank() < self.long.rank() {
                self.long = reduced;
            }
        }
        Ok(self)
    }

    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    pub fn long(&self) -> &CanonicalTensor3<T> {
        &self.long
    }

    pub fn short_reference(&self) -> &CanonicalTensor3<T> {
        &self.short_reference
    }

    pub fn centers(&self) -> &[[usize; 3]] {
        &self.centers
    }

    pub fn charges(&self) -> &[T] {
        &self.charges
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    /// ∞-norm radius (grid units) of the stored short-range window.
    pub fn short_radius(&self) -> usize {
        self.short_reference.sizes()[0] - 1
    }

    pub fn long_rank(&self) -> usize {
        self.long.rank()
    }

    pub fn short_rank(&self) -> usize {
        self.short_reference.rank()
    }

    pub fn pre_compression_rank(&self) -> usize {
        self.pre_compression_rank
    }

    /// Stored numbers with weights folded into the vectors:
    /// `3 R_L n + 4 N + 3 R_s (w + 1)`.
    pub fn storage(&self) -> usize {
        3 * self.long_rank() * self.grid.n() + 4 * self.centers.len() + 3 * self.short_rank() * (self.short_radius() + 1)
    }

    /// Short reference value at an offset, zero outside the window.
    #[inline]
    pub fn short_at(&self, off: [usize; 3]) -> T {
        if off.iter().any(|&o| o > self.short_radius()) {
            T::zero()
        } else {
            self.short_reference.entry(off)
        }
    }

    /// Short-range sum at node `idx`.
    pub fn short_entry(&self, idx: [usize; 3]) -> T {
        let mut s = T::zero();
        self.index.for_each_near(&self.centers, idx, |j| {
            let c = self.centers[j];
            s = s + self.charges[j] * self.short_at([0, 1, 2].map(|l| c[l].abs_diff(idx[l])));
        });
        s
    }

    /// Entry of the RS tensor: long part plus nearby short contributions.
    pub fn eval_entry(&self, idx: [usize; 3]) -> Result<T> {
        self.grid.check_index(idx)?;
        Ok(self.long.entry(idx) + self.short_entry(idx))
    }

    /// Dense short-range field: every atom's window scattered onto the grid.
    pub fn short_dense(&self) -> Vec<T> {
        let n = self.grid.n();
        let w = self.short_radius();
        let profile = self.short_reference.to_dense();
        let wp = w + 1;
        let mut out = vec![T::zero(); n * n * n];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i3, plane)| {
            for (c, &z) in self.centers.iter().zip(&self.charges) {
                let o3 = c[2].abs_diff(i3);
                if o3 > w {
                    continue;
                }
                let lo = |l: usize| c[l].saturating_sub(w);
                let hi = |l: usize| (c[l] + w).min(n - 1);
                for i2 in lo(1)..=hi(1) {
                    let o2 = c[1].abs_diff(i2);
                    let base = wp * (o2 + wp * o3);
                    let row = &mut plane[i2 * n..(i2 + 1) * n];
                    for i1 in lo(0)..=hi(0) {
                        row[i1] = row[i1] + z * profile[c[0].abs_diff(i1) + base];
                    }
                }
            }
        });
        out
    }

    /// Dense total field `long + short`.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = self.long.to_dense();
        for (a, b) in d.iter_mut().zip(self.short_dense()) {
            *a = *a + b;
        }
        d
    }

    /// Writes `long.cpt`, `short_ref.cpt` and a `rs.txt` sidecar to `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.long.write_to(BufWriter::new(fs::File::create(dir.join("long.cpt"))?))?;
        self.short_reference.write_to(BufWriter::new(fs::File::create(dir.join("short_ref.cpt"))?))?;
        let mut w = BufWriter::new(fs::File::create(dir.join("rs.txt"))?);
        writeln!(w, "n={}", self.grid.n())?;
        writeln!(w, "b={:e}", self.grid.half_width().to_f64_lossy())?;
        writeln!(w, "gamma={}", self.gamma)?;
        writeln!(w, "pre_compression_rank={}", self.pre_compression_rank)?;
        writeln!(w, "atoms={}", self.centers.len())?;
        for (c, z) in self.centers.iter().zip(&self.charges) {
            writeln!(w, "{} {} {} {:e}", c[0], c[1], c[2], z.to_f64_lossy())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let long = CanonicalTensor3::read_from(BufReader::new(fs::File::open(dir.join("long.cpt"))?))?;
        let short_reference = CanonicalTensor3::read_from(BufReader::new(fs::File::open(dir.join("short_ref.cpt"))?))?;
        let text = fs::read_to_string(dir.join("rs.txt"))?;
        let bad = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let mut header = HashMap::new();
        for _ in 0..5 {
            let (i, l) = lines.next().ok_or_else(|| bad(0, "truncated sidecar"))?;
            let (k, v) = l.split_once('=').ok_or_else(|| bad(i + 1, "expected key=value"))?;
            header.insert(k.to_string(), (i + 1, v.to_string()));
        }
        let get = |k: &str| -> Result<f64> {
            let (i, v) = header.get(k).ok_or_else(|| bad(0, &format!("missing {k}")))?;
            v.parse().map_err(|_| bad(*i, &format!("bad value for {k}")))
        };
        let grid = Grid3::new(T::of(get("b")?), get("n")? as usize)?;
        let gamma = get("gamma")? as usize;
        let pre = get("pre_compression_rank")? as usize;
        let atoms = get("atoms")? as usize;
        let mut centers = Vec::with_capacity(atoms);
        let mut charges = Vec::with_capacity(atoms);
        for (i, l) in lines.take(atoms) {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad(i + 1, "expected 'i1 i2 i3 charge'"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad index"));
            let c = [idx(f[0])?, idx(f[1])?, idx(f[2])?];
            grid.check_index(c)?;
            centers.push(c);
            charges.push(T::of(f[3].parse::<f64>().map_err(|_| bad(i + 1, "bad charge"))?));
        }
        if centers.len() != atoms {
            return Err(bad(0, "short list shorter than declared"));
        }
        if long.sizes() != [grid.n(); 3] {
            return Err(Error::ShapeMismatch("long part does not match the grid".into()));
        }
        let radius = short_reference.sizes()[0].saturating_sub(1);
        let index = SpatialIndex::new(&centers, radius);
        Ok(Self { grid, long, short_reference, centers, charges, gamma, pre_compression_rank: pre, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::split_reference;
    use crate::molecule::{born_ion, Atom};

    #[test]
    fn snap_exact_and_tie() {
        let g = Grid3::new(4.0f64, 9).unwrap(); // h = 1
        let m = Molecule::new(
            "t",
            vec![
                Atom { position: [1.0, -2.0, 0.0], charge: 1.0, radius: 1.0 },
                Atom { position: [1.5, -1.5, 0.25], charge: 1.0, radius: 1.0 },
            ],
        )
        .unwrap();
        let s = snap_to_grid(&m, &g).unwrap();
        assert_eq!(s[0].index, [5, 2, 4]);
        assert_eq!(s[0].offset, [0.0, 0.0, 0.0]);
        // Ties move away from the center on each axis.
        assert_eq!(s[1].index, [6, 2, 4]);
        assert_eq!(s[1].offset, [-0.5, 0.5, 0.25]);
        let out = Molecule::new("o", vec![Atom { position: [4.5, 0.0, 0.0], charge: 1.0, radius: 1.0 }]).unwrap();
        assert!(matches!(snap_to_grid(&out, &g), Err(Error::AtomOutsideBox { atom: 0 })));
    }

    #[test]
    fn born_ion_rs_equals_reference() {
        let g = Grid3::new(4.0f64, 17).unwrap();
        let k = split_reference(&ReferenceKernel::build(&g, 12).unwrap(), 4, 1e-8).unwrap();
        let rs = assemble_collective(&born_ion(), &k, 1e-8).unwrap();
        assert_eq!(rs.long_rank(), k.split().unwrap().long_rank);
        for idx in [[8, 8, 8], [0, 3, 16], [9, 8, 7]] {
            let want = k.entry_at_offset(idx.map(|i| i as i64 - 8)).unwrap();
            let got = rs.eval_entry(idx).unwrap();
            assert!((got - want).abs() <= 1e-14 * want, "{got} {want}");
        }
    }

    #[test]
    fn margin_is_enforced() {
        let g = Grid3::new(4.0f64, 17).unwrap();
        let k = split_reference(&ReferenceKernel::build(&g, 12).unwrap(), 6, 1e-8).unwrap();
        let m = Molecule::new("edge", vec![Atom { position: [3.75, 0.0, 0.0], charge: 1.0, radius: 1.0 }]).unwrap();
        assert!(matches!(assemble_collective(&m, &k, 1e-8), Err(Error::MarginViolation { atom: 0, .. })));
    }

    #[test]
    fn save_load_roundtrip() {
        let g = Grid3::new(4.0f64, 17).unwrap();
        let k = split_reference(&ReferenceKernel::build(&g, 10).unwrap(), 4, 1e-8).unwrap();
        let m = crate::molecule::synthetic_cluster(3, 1.5, 1.0, 3).unwrap();
        let rs = assemble_collective(&m, &k, 1e-8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rs.save(dir.path()).unwrap();
        let back = RsTensor::<f64>::load(dir.path()).unwrap();
        for f in (0..g.len()).step_by(97) {
            let i = g.unflat(f);
            assert!((back.eval_entry(i).unwrap() - rs.eval_entry(i).unwrap()).abs() < 1e-15);
        }
        assert_eq!(back.pre_compression_rank(), rs.pre_compression_rank());
    }
}
