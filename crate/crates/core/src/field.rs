//! Dense scalar fields on the `n x n x n` grid.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::scalar::Real;

/// Values in axis-1-fastest order: `values[i1 + n (i2 + n i3)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction3<T> {
    grid: Grid3<T>,
    values: Vec<T>,
}

impl<T: Real> GridFunction3<T> {
    pub fn new(grid: Grid3<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3<T>) -> Self {
        Self { grid, values: vec![T::zero(); grid.len()] }
    }

    pub fn from_fn(grid: Grid3<T>, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.unflat(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> T {
        self.values[self.grid.flat(idx)]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    /// Pointwise `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a + *b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| *v * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Raw little-endian `f64` values, axis 1 fastest.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for v in &self.values {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_raw(path: &Path, grid: Grid3<T>) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() != 8 * grid.len() {
            return Err(Error::Format(format!(
                "{} holds {} bytes, expected {} for n={}",
                path.display(),
                bytes.len(),
                8 * grid.len(),
                grid.n()
            )));
        }
        let values = bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap()))).collect();
        Ok(Self { grid, values })
    }

    /// Writes `<stem>.f64` and a `<stem>.txt` key=value sidecar with the grid
    /// description followed by `extra` entries.
    pub fn dump(&self, dir: &Path, stem: &str, extra: &[(&str, String)]) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_raw(&dir.join(format!("{stem}.f64")))?;
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("{stem}.txt")))?);
        writeln!(w, "n={}", self.grid.n())?;
        writeln!(w, "b={:e}", self.grid.half_width().to_f64_lossy())?;
        writeln!(w, "h={:e}", self.grid.h().to_f64_lossy())?;
        writeln!(w, "order=axis1_fastest")?;
        writeln!(w, "dtype=f64le")?;
        writeln!(w, "units=e/angstrom")?;
        for (k, v) in extra {
            writeln!(w, "{k}={v}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`GridFunction3::dump`].
    pub fn load_dump(dir: &Path, stem: &str) -> Result<Self> {
        let side = read_sidecar(&dir.join(format!("{stem}.txt")))?;
        let field = |k: &str| -> Result<f64> {
            side.iter()
                .find(|(key, _)| key == k)
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("sidecar lacks a numeric {k}")))
        };
        let grid = Grid3::new(T::of(field("b")?), field("n")? as usize)?;
        Self::read_raw(&dir.join(format!("{stem}.f64")), grid)
    }
}

/// Parses a key=value text file, ignoring blank lines.
pub fn read_sidecar(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected key=value".into() })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_roundtrip() {
        let g = Grid3::new(2.0f64, 5).unwrap();
        let f = GridFunction3::from_fn(g, |[a, b, c]| a as f64 - 0.5 * b as f64 + 1e-3 * c as f64);
        let dir = tempfile::tempdir().unwrap();
        f.dump(dir.path(), "u", &[("bc", "homogeneous".into())]).unwrap();
        let back = GridFunction3::<f64>::load_dump(dir.path(), "u").unwrap();
        assert_eq!(back, f);
        let side = read_sidecar(&dir.path().join("u.txt")).unwrap();
        assert!(side.contains(&("bc".into(), "homogeneous".into())));
        assert_eq!(std::fs::metadata(dir.path().join("u.f64")).unwrap().len(), 8 * 125);
    }

    #[test]
    fn shape_checked() {
        let g = Grid3::new(1.0f64, 3).unwrap();
        assert!(GridFunction3::new(g, vec![0.0; 26]).is_err());
    }
}
