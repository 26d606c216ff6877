//! Range-separated discrete Dirac delta `δ = -A_Δ P` and composition of the
//! total potential.
//!
//! The long part `δ_l = -A_Δ P_l` is a canonical tensor of rank `3 R_L`; the
//! short part is one compact reference `-A_Δ` applied to the short window,
//! shifted to every atom like the short potential. The Laplacian here is the
//! unscreened one: `δ` is the charge density and does not depend on `κ`.

use rayon::prelude::*;

use crate::canonical::CanonicalTensor3;
use crate::error::{Error, Result};
use crate::field::GridFunction3;
use crate::grid::Grid3;
use crate::laplacian::{apply_kron_stencil, DiscreteLaplacian};
use crate::rs::RsTensor;
use crate::scalar::Real;

/// How the `1/(4π)` factor of the delta is handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaScaling {
    /// `δ := -A_Δ P` and the solve uses `-A_Δ U = δ`, so the factor cancels.
    Unscaled,
}

#[derive(Clone, Debug)]
pub struct DeltaSplit<T> {
    grid: Grid3<T>,
    delta_long: CanonicalTensor3<T>,
    delta_short: CanonicalTensor3<T>,
    radius: usize,
    centers: Vec<[usize; 3]>,
    charges: Vec<T>,
    scaling: DeltaScaling,
}

/// Builds the delta split of an assembled RS tensor.
pub fn build_delta_split<T: Real>(rs: &RsTensor<T>, lap: &DiscreteLaplacian<T>) -> Result<DeltaSplit<T>> {
    let grid = *rs.grid();
    if lap.grid() != &grid {
        return Err(Error::ShapeMismatch("RS tensor and Laplacian live on different grids".into()));
    }
    let s = lap.inv_h2();
    let mut delta_long = apply_kron_stencil(rs.long(), s, T::zero())?;
    delta_long.scale(-T::one());

    // The stencil spills one node past the short window.
    let n = grid.n();
    let radius = (rs.short_radius() + 1).min(n - 1);
    let half = rs.short_reference();
    let wp = half.sizes()[0];
    let mut window = CanonicalTensor3::zeros([2 * radius + 1; 3]);
    let mut col = vec![T::zero(); 2 * radius + 1];
    for k in 0..half.rank() {
        let h = half.column(0, k);
        for (o, v) in col.iter_mut().enumerate() {
            let d = o.abs_diff(radius);
            *v = if d < wp { h[d] } else { T::zero() };
        }
        window.push_column(half.weights()[k], &col, &col, &col);
    }
    let mut delta_short = apply_kron_stencil(&window, s, T::zero())?;
    delta_short.scale(-T::one());

    Ok(DeltaSplit {
        grid,
        delta_long,
        delta_short,
        radius,
        centers: rs.centers().to_vec(),
        charges: rs.charges().to_vec(),
        scaling: DeltaScaling::Unscaled,
    })
}

impl<T: Real> DeltaSplit<T> {
    pub fn grid(&self) -> &Grid3<T> {
        &self.grid
    }

    pub fn delta_long(&self) -> &CanonicalTensor3<T> {
        &self.delta_long
    }

    /// Compact reference of the short delta, centered at `(r, r, r)`.
    pub fn delta_short(&self) -> &CanonicalTensor3<T> {
        &self.delta_short
    }

    pub fn short_radius(&self) -> usize {
        self.radius
    }

    pub fn scaling(&self) -> DeltaScaling {
        self.scaling
    }

    pub fn long_dense(&self) -> GridFunction3<T> {
        GridFunction3::new(self.grid, self.delta_long.to_dense()).expect("sizes match grid")
    }

    /// Collective short delta scattered onto the grid.
    pub fn short_dense(&self) -> GridFunction3<T> {
        let n = self.grid.n();
        let r = self.radius;
        let w = 2 * r + 1;
        let profile = self.delta_short.to_dense();
        let mut out = vec![T::zero(); n * n * n];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i3, plane)| {
            for (c, &z) in self.centers.iter().zip(&self.charges) {
                if c[2].abs_diff(i3) > r {
                    continue;
                }
                let o3 = i3 + r - c[2];
                for i2 in c[1].saturating_sub(r)..=(c[1] + r).min(n - 1) {
                    let base = w * ((i2 + r - c[1]) + w * o3);
                    for i1 in c[0].saturating_sub(r)..=(c[0] + r).min(n - 1) {
                        let v = &mut plane[i1 + n * i2];
                        *v = *v + z * profile[(i1 + r - c[0]) + base];
                    }
                }
            }
        });
        GridFunction3::new(self.grid, out).expect("sizes match grid")
    }
}

/// `u_long` plus the short-range part of `rs`.
pub fn compose_total<T: Real>(u_long: &GridFunction3<T>, rs: &RsTensor<T>) -> Result<GridFunction3<T>> {
    if u_long.grid() != rs.grid() {
        return Err(Error::ShapeMismatch("long-range solution and RS tensor live on different grids".into()));
    }
    let mut v = rs.short_dense();
    v.par_iter_mut().zip(u_long.values()).for_each(|(a, b)| *a = *a + *b);
    GridFunction3::new(*rs.grid(), v)
}
