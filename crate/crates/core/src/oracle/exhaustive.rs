//! Brute-force minimum of the binary energy on tiny grids.

use rayon::prelude::*;

use crate::error::{ReconError, Result};
use crate::grid::ScalarGrid;
use crate::solver::{energy, Boundary, Mode};

/// Largest number of free vertices the enumeration accepts.
pub const MAX_FREE_VERTICES: usize = 20;

/// Free vertices in index order.
fn free_vertices(div: &ScalarGrid, boundary: Boundary) -> Vec<usize> {
    let dims = div.dims();
    (0..dims.len())
        .filter(|&i| {
            let [x, y, z] = dims.unindex(i);
            boundary == Boundary::Free || !dims.is_boundary(x, y, z)
        })
        .collect()
}

/// Write assignment `code` into `u`. The first free vertex takes the most
/// significant bit, so numeric order of codes is lexicographic order of
/// assignments.
fn decode(code: u32, free: &[usize], u: &mut ScalarGrid) {
    let n = free.len();
    let data = u.data_mut();
    for (k, &i) in free.iter().enumerate() {
        data[i] = f64::from((code >> (n - 1 - k)) & 1);
    }
}

/// Minimize the exact (unsmoothed) total-variation energy over all 0/1
/// fields with the given boundary handling, evaluating each candidate with
/// [`energy`]. Ties go to the lexicographically smallest assignment in
/// vertex order. Returns the minimizer and its energy.
pub fn exhaustive_binary_min(div: &ScalarGrid, lambda: f64, boundary: Boundary) -> Result<(ScalarGrid, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ReconError::Config(format!("lambda must be positive, got {lambda}")));
    }
    if div.data().iter().any(|v| !v.is_finite()) {
        return Err(ReconError::Input("divergence has non-finite values".into()));
    }
    let free = free_vertices(div, boundary);
    if free.len() > MAX_FREE_VERTICES {
        return Err(ReconError::Config(format!(
            "exhaustive enumeration is limited to {MAX_FREE_VERTICES} free vertices \
             (2^{MAX_FREE_VERTICES} assignments), grid has {}",
            free.len()
        )));
    }
    let bits = free.len() as u32;
    let total = 1u64 << bits;
    let block_bits = bits.min(6);
    let block_len = total >> block_bits;

    let block_best: Vec<(f64, u32)> = (0..1u64 << block_bits)
        .into_par_iter()
        .map(|b| {
            let mut u = ScalarGrid::zeros(*div.frame());
            let mut best = (f64::INFINITY, u32::MAX);
            for code in b * block_len..(b + 1) * block_len {
                let code = code as u32;
                decode(code, &free, &mut u);
                let e = energy(&u, div, lambda, Mode::Tv);
                if e < best.0 {
                    best = (e, code);
                }
            }
            best
        })
        .collect();
    // blocks are in code order, so a strict comparison keeps the first tie
    let mut best = block_best[0];
    for &cand in &block_best[1..] {
        if cand.0 < best.0 {
            best = cand;
        }
    }
    let mut u = ScalarGrid::zeros(*div.frame());
    decode(best.1, &free, &mut u);
    Ok((u, best.0))
}
