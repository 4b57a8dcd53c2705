//! From relaxed indicator to triangle mesh: threshold, re-smooth, choose the
//! isovalue at the samples, extract.

mod mc;
mod mesh;

pub use mc::marching_cubes;
pub use mesh::{EdgeStats, TriangleMesh};

use crate::error::{ReconError, Result};
use crate::field::{box_smooth_values, PointSample, DEFAULT_SMOOTHING_PASSES};
use crate::grid::ScalarGrid;

/// Default threshold for binarizing the relaxed solution.
pub const DEFAULT_MU: f64 = 0.5;

/// Thresholds used by the inside-count report.
pub const REPORT_THRESHOLDS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Binarize: 1 where `u > mu`, else 0. Also returns the number of inside
/// vertices.
pub fn threshold(u: &ScalarGrid, mu: f64) -> Result<(ScalarGrid, usize)> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(ReconError::Config(format!("threshold must lie in (0, 1), got {mu}")));
    }
    let mut count = 0;
    let data = u
        .data()
        .iter()
        .map(|&v| {
            if v > mu {
                count += 1;
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((ScalarGrid::from_vec(*u.frame(), data)?, count))
}

/// Inside counts of `u` at each threshold.
pub fn inside_counts(u: &ScalarGrid, mus: &[f64]) -> Result<Vec<(f64, usize)>> {
    mus.iter().map(|&mu| Ok((mu, threshold(u, mu)?.1))).collect()
}

/// Smooth a binary field with the same iterated box filter as the splatted
/// vector field.
pub fn smooth_binary(u_hat: &ScalarGrid) -> ScalarGrid {
    let data = box_smooth_values(u_hat.data(), u_hat.dims(), DEFAULT_SMOOTHING_PASSES);
    ScalarGrid::from_vec(*u_hat.frame(), data).expect("smoothing keeps the length")
}

/// Mean of the trilinearly interpolated field over the sample positions.
pub fn select_isovalue(u_tilde: &ScalarGrid, samples: &[PointSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(ReconError::Input("isovalue needs at least one sample".into()));
    }
    let mut sum = 0.0;
    for (i, s) in samples.iter().enumerate() {
        sum += u_tilde.sample(&s.p).ok_or_else(|| {
            ReconError::Input(format!("sample {i} at {:?} lies outside the grid", s.p.coords.as_slice()))
        })?;
    }
    Ok(sum / samples.len() as f64)
}
