//! Dense orientation field from sparse oriented samples.
//!
//! Each sample's orientation is splatted onto the eight vertices of its cell,
//! the result is blurred with an iterated 3-tap box filter, and the divergence
//! of the blurred field is taken with central differences.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::error::{ReconError, Result};
use crate::grid::{GridDims, GridFrame, ScalarGrid, VectorGrid};

/// Box-filter iterations used throughout the pipeline.
pub const DEFAULT_SMOOTHING_PASSES: usize = 3;

/// Outer vertex layers forced to zero after smoothing the vector field, so
/// that central differences never read past the boundary and the field is
/// compactly supported.
pub const ZEROED_LAYERS: usize = 2;

/// A point on (or near) the surface with a rough outward orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSample {
    pub p: Point3<f64>,
    pub v: Vector3<f64>,
}

impl PointSample {
    /// Fails on non-finite input or a zero orientation vector.
    pub fn new(p: Point3<f64>, v: Vector3<f64>) -> Result<Self> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(ReconError::Input(format!("non-finite sample position {p:?}")));
        }
        if !v.iter().all(|c| c.is_finite()) {
            return Err(ReconError::Input(format!("non-finite orientation {v:?}")));
        }
        if v.norm_squared() == 0.0 {
            return Err(ReconError::Input("zero-length orientation vector".into()));
        }
        Ok(PointSample { p, v })
    }

    pub fn flipped(&self) -> Self {
        PointSample { p: self.p, v: -self.v }
    }
}

/// The eight trilinear weights of a fractional cell position, indexed by
/// corner `dx + 2*dy + 4*dz`.
#[inline]
pub fn trilinear_weights(f: [f64; 3]) -> [f64; 8] {
    let [x, y, z] = f;
    let mut w = [0.0; 8];
    for (c, wc) in w.iter_mut().enumerate() {
        let wx = if c & 1 == 0 { 1.0 - x } else { x };
        let wy = if c & 2 == 0 { 1.0 - y } else { y };
        let wz = if c & 4 == 0 { 1.0 - z } else { z };
        *wc = wx * wy * wz;
    }
    w
}

/// Distribute every sample's orientation to the vertices of its cell.
pub fn splat(samples: &[PointSample], frame: &GridFrame) -> Result<VectorGrid> {
    let mut field = VectorGrid::zeros(*frame);
    let [sx, sy, sz] = frame.dims.strides();
    let corner_offsets: [usize; 8] = std::array::from_fn(|c| {
        (c & 1) * sx + ((c >> 1) & 1) * sy + ((c >> 2) & 1) * sz
    });
    for (k, s) in samples.iter().enumerate() {
        let (cell, frac) = frame.locate(&s.p).ok_or_else(|| {
            ReconError::Input(format!("sample {k} at {:?} lies outside the grid", s.p))
        })?;
        let base = frame.index(cell[0], cell[1], cell[2]);
        let w = trilinear_weights(frac);
        let comps = field.components_mut();
        for (c, &off) in corner_offsets.iter().enumerate() {
            for a in 0..3 {
                comps[a][base + off] += w[c] * s.v[a];
            }
        }
    }
    Ok(field)
}

/// One zero-padded 3-tap box pass along `axis`.
fn box_pass(input: &[f64], dims: GridDims, axis: usize) -> Vec<f64> {
    let [nx, ny, _] = dims.as_array();
    let n_axis = dims.as_array()[axis];
    let stride = dims.strides()[axis];
    let slab = nx * ny;
    let mut out = vec![0.0; input.len()];
    out.par_chunks_mut(slab).enumerate().for_each(|(z, slab_out)| {
        for (j, o) in slab_out.iter_mut().enumerate() {
            let i = z * slab + j;
            let coord = match axis {
                0 => j % nx,
                1 => j / nx,
                _ => z,
            };
            let mut acc = input[i];
            if coord > 0 {
                acc += input[i - stride];
            }
            if coord + 1 < n_axis {
                acc += input[i + stride];
            }
            *o = acc / 3.0;
        }
    });
    out
}

/// Convolve a flat scalar array `passes` times per axis with the normalized
/// 3-tap box kernel, treating values outside the grid as zero.
pub fn box_smooth_values(values: &[f64], dims: GridDims, passes: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    for _ in 0..passes {
        for axis in 0..3 {
            cur = box_pass(&cur, dims, axis);
        }
    }
    cur
}

/// Set the outermost `layers` vertex layers to zero.
pub fn zero_outer_layers(values: &mut [f64], dims: GridDims, layers: usize) {
    let [nx, ny, nz] = dims.as_array();
    let slab = nx * ny;
    values.par_chunks_mut(slab).enumerate().for_each(|(z, s)| {
        let z_out = z < layers || z + layers >= nz;
        for y in 0..ny {
            let y_out = y < layers || y + layers >= ny;
            for x in 0..nx {
                if z_out || y_out || x < layers || x + layers >= nx {
                    s[x + nx * y] = 0.0;
                }
            }
        }
    });
}

/// Smooth each component of the splatted field and clear the two outermost
/// vertex layers.
pub fn box_smooth(field: &VectorGrid, passes: usize) -> Result<VectorGrid> {
    if passes == 0 {
        return Err(ReconError::Config("box smoothing needs at least one pass".into()));
    }
    let frame = *field.frame();
    let comps = [0, 1, 2].map(|a| {
        let mut c = box_smooth_values(field.component(a), frame.dims, passes);
        zero_outer_layers(&mut c, frame.dims, ZEROED_LAYERS);
        c
    });
    VectorGrid::from_components(frame, comps)
}

/// Central-difference divergence in world units; zero on the boundary layer.
pub fn divergence(field: &VectorGrid) -> ScalarGrid {
    let frame = *field.frame();
    let dims = frame.dims;
    let [nx, ny, nz] = dims.as_array();
    let [_, sy, sz] = dims.strides();
    let (v1, v2, v3) = (field.component(0), field.component(1), field.component(2));
    let inv_2h = 1.0 / (2.0 * frame.h);
    let mut div = vec![0.0; frame.len()];
    div.par_chunks_mut(sz).enumerate().for_each(|(z, slab)| {
        if z == 0 || z + 1 == nz {
            return;
        }
        for y in 1..ny - 1 {
            for x in 1..nx - 1 {
                let i = x + nx * y + sz * z;
                let d = (v1[i + 1] - v1[i - 1]) + (v2[i + sy] - v2[i - sy]) + (v3[i + sz] - v3[i - sz]);
                slab[x + nx * y] = d * inv_2h;
            }
        }
    });
    ScalarGrid::from_vec(frame, div).expect("length matches frame")
}

/// Splat, smooth and differentiate in one go.
pub fn divergence_of_samples(samples: &[PointSample], frame: &GridFrame) -> Result<ScalarGrid> {
    let raw = splat(samples, frame)?;
    let smooth = box_smooth(&raw, DEFAULT_SMOOTHING_PASSES)?;
    Ok(divergence(&smooth))
}
