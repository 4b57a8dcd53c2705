use rayon::prelude::*;

use super::Mode;
use crate::grid::{GridDims, ScalarGrid};

/// Forward-difference gradient magnitude at vertex `(x,y,z)` in world units.
/// Differences past the last vertex of an axis are zero.
#[inline]
fn forward_gradient_sq(u: &[f64], dims: GridDims, x: usize, y: usize, z: usize, inv_h: f64) -> f64 {
    let [nx, ny, nz] = dims.as_array();
    let [_, sy, sz] = dims.strides();
    let i = x + nx * y + sz * z;
    let ui = u[i];
    let dx = if x + 1 < nx { u[i + 1] - ui } else { 0.0 };
    let dy = if y + 1 < ny { u[i + sy] - ui } else { 0.0 };
    let dz = if z + 1 < nz { u[i + sz] - ui } else { 0.0 };
    (dx * dx + dy * dy + dz * dz) * inv_h * inv_h
}

/// Map every z-slab to a partial sum and add the partials in slab order, so
/// the result does not depend on the thread count.
fn slab_sum(dims: GridDims, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let partial: Vec<f64> = (0..dims.nz).into_par_iter().map(f).collect();
    partial.iter().sum()
}

/// Sum of `phi(|grad u|)` over all vertices, without volume weights.
pub(crate) fn regularizer_sum(u: &ScalarGrid, mode: Mode) -> f64 {
    let dims = u.dims();
    let inv_h = 1.0 / u.frame().h;
    let data = u.data();
    slab_sum(dims, |z| {
        let mut acc = 0.0;
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let sq = forward_gradient_sq(data, dims, x, y, z, inv_h);
                acc += match mode {
                    Mode::Tv => sq.sqrt(),
                    Mode::Poisson => sq,
                };
            }
        }
        acc
    })
}

/// Discrete energy of `u`:
///
/// `E(u) = lambda * h^3 * sum_i phi(|grad u|_i) - h * sum_i div_i * u_i`
///
/// with `phi(s) = s` (total variation) or `phi(s) = s^2` (Poisson), forward
/// differences for the gradient and world-unit divergence. The data term
/// carries one power of `h` (the splatted field is a per-area density), which
/// makes the standard SOR update in [`super::sor_sweep`] the exact stationarity
/// condition of this energy on any grid spacing. For `h = 1` both weights are 1.
pub fn energy(u: &ScalarGrid, div: &ScalarGrid, lambda: f64, mode: Mode) -> f64 {
    debug_assert_eq!(u.frame(), div.frame());
    let h = u.frame().h;
    let dims = u.dims();
    let (ud, dd) = (u.data(), div.data());
    let slab = dims.nx * dims.ny;
    let data_term = slab_sum(dims, |z| {
        let r = z * slab..(z + 1) * slab;
        ud[r.clone()].iter().zip(&dd[r]).map(|(a, b)| a * b).sum()
    });
    lambda * h * h * h * regularizer_sum(u, mode) - h * data_term
}

/// Lagged diffusivity `g = 1 / sqrt(|grad u|^2 + eps^2)` using the same
/// forward-difference stencil as [`energy`].
pub fn update_diffusivity(u: &ScalarGrid, epsilon: f64) -> ScalarGrid {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let dims = u.dims();
    let inv_h = 1.0 / u.frame().h;
    let eps2 = epsilon * epsilon;
    let src = u.data();
    let mut g = vec![0.0; dims.len()];
    let slab = dims.nx * dims.ny;
    g.par_chunks_mut(slab).enumerate().for_each(|(z, out)| {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let sq = forward_gradient_sq(src, dims, x, y, z, inv_h);
                out[x + dims.nx * y] = 1.0 / (sq + eps2).sqrt();
            }
        }
    });
    ScalarGrid::from_vec(*u.frame(), g).expect("length matches frame")
}
