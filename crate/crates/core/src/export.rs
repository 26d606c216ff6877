//! Slice and volume export: CSV planes and legacy VTK structured points.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::GridFunction3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Vtk,
}

/// Plane `axis = index` (axis in `1..=3`) as rows of the slower remaining
/// axis, columns of the faster one.
pub fn slice<T: Real>(f: &GridFunction3<T>, axis: usize, index: usize) -> Result<Vec<Vec<T>>> {
    let n = f.grid().n();
    if !(1..=3).contains(&axis) {
        return Err(Error::InvalidArgument(format!("axis must be 1, 2 or 3, got {axis}")));
    }
    if index >= n {
        return Err(Error::InvalidArgument(format!("slice index {index} out of range for n={n}")));
    }
    let at = |r: usize, c: usize| -> [usize; 3] {
        match axis {
            1 => [index, c, r],
            2 => [c, index, r],
            _ => [c, r, index],
        }
    };
    Ok((0..n).map(|r| (0..n).map(|c| f.get(at(r, c))).collect()).collect())
}

fn axis_names(axis: usize) -> (&'static str, &'static str) {
    match axis {
        1 => ("i3", "i2"),
        2 => ("i3", "i1"),
        _ => ("i2", "i1"),
    }
}

/// Writes a slice (or, for VTK without an axis, the whole volume).
pub fn export_slice<T: Real>(
    f: &GridFunction3<T>,
    axis: Option<usize>,
    index: usize,
    format: ExportFormat,
    path: &Path,
) -> Result<()> {
    match (format, axis) {
        (ExportFormat::Csv, Some(a)) => write_csv(f, a, index, path),
        (ExportFormat::Csv, None) => Err(Error::InvalidArgument("csv export needs an axis".into())),
        (ExportFormat::Vtk, a) => write_vtk(f, a.map(|a| (a, index)), path),
    }
}

fn write_csv<T: Real>(f: &GridFunction3<T>, axis: usize, index: usize, path: &Path) -> Result<()> {
    let rows = slice(f, axis, index)?;
    let g = f.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    let (r, c) = axis_names(axis);
    writeln!(
        w,
        "# axis={axis} index={index} n={} b={:e} h={:e} rows={r} cols={c}",
        g.n(),
        g.half_width().to_f64_lossy(),
        g.h().to_f64_lossy()
    )?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{:e}", v.to_f64_lossy())).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV slice written by [`export_slice`], skipping the header.
pub fn read_slice_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse { line: i + 1, msg: format!("malformed value {v:?}") }))
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

fn write_vtk<T: Real>(f: &GridFunction3<T>, plane: Option<(usize, usize)>, path: &Path) -> Result<()> {
    let g = f.grid();
    let n = g.n();
    let b = g.half_width().to_f64_lossy();
    let h = g.h().to_f64_lossy();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "electrostatic potential n={n} b={b:e}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    let mut origin = [-b; 3];
    let mut dims = [n; 3];
    let values: Vec<T> = match plane {
        None => f.values().to_vec(),
        Some((axis, index)) => {
            let rows = slice(f, axis, index)?;
            dims[axis - 1] = 1;
            origin[axis - 1] = g.coord(index).to_f64_lossy();
            // VTK orders x fastest, which is the column axis of the slice.
            rows.into_iter().flatten().collect()
        }
    };
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "ORIGIN {:e} {:e} {:e}", origin[0], origin[1], origin[2])?;
    writeln!(w, "SPACING {h:e} {h:e} {h:e}")?;
    writeln!(w, "POINT_DATA {}", values.len())?;
    writeln!(w, "SCALARS potential double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for chunk in values.chunks(n) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{:e}", v.to_f64_lossy())).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}
