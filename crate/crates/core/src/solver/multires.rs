//! Cascadic coarse-to-fine driver.

use log::info;

use super::{apply_boundary, solve_level, SolveReport, SolverConfig};
use crate::error::{ReconError, Result};
use crate::grid::{GridFrame, Pyramid, ScalarGrid};

/// Sum every fine vertex into its nearest coarse vertex.
///
/// Fine index `x` maps to coarse `x / 2`: even indices coincide with a coarse
/// vertex, odd ones sit halfway and go to the lower of the two.
pub fn restrict_divergence(fine: &ScalarGrid, coarse: &GridFrame) -> Result<ScalarGrid> {
    let f = fine.dims().as_array();
    let c = coarse.dims.as_array();
    if (0..3).any(|a| (f[a] - 1) != 2 * (c[a] - 1)) || coarse.h != 2.0 * fine.frame().h {
        return Err(ReconError::Input(format!(
            "{} is not the coarsening of {}",
            coarse.dims,
            fine.dims()
        )));
    }
    let mut out = ScalarGrid::zeros(*coarse);
    let src = fine.data();
    let dst = out.data_mut();
    let mut i = 0;
    for z in 0..f[2] {
        for y in 0..f[1] {
            let row = c[0] * (y / 2 + c[1] * (z / 2));
            for x in 0..f[0] {
                dst[row + x / 2] += src[i];
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Up-sample a coarse solution onto the next finer frame: injection where
/// vertices coincide, trilinear averaging of the coarse neighbours elsewhere.
pub fn prolong(coarse: &ScalarGrid, fine: &GridFrame) -> Result<ScalarGrid> {
    let f = fine.dims.as_array();
    let c = coarse.dims().as_array();
    if (0..3).any(|a| (f[a] - 1) != 2 * (c[a] - 1)) {
        return Err(ReconError::Input(format!(
            "{} is not the refinement of {}",
            fine.dims,
            coarse.dims()
        )));
    }
    let cd = coarse.dims();
    let src = coarse.data();
    Ok(ScalarGrid::from_fn(*fine, |x, y, z| {
        let lo = [x / 2, y / 2, z / 2];
        let odd = [x % 2, y % 2, z % 2];
        let mut acc = 0.0;
        let mut count = 0u32;
        for dz in 0..=odd[2] {
            for dy in 0..=odd[1] {
                for dx in 0..=odd[0] {
                    acc += src[cd.index(lo[0] + dx, lo[1] + dy, lo[2] + dz)];
                    count += 1;
                }
            }
        }
        // midpoints of a cubical cell: equal-weight averages are exact trilinear weights
        (acc / f64::from(count)).clamp(0.0, 1.0)
    }))
}

/// Solve on every pyramid level, coarsest first, each level starting from
/// the prolonged solution of the previous one.
pub fn solve_multires(
    div_fine: &ScalarGrid,
    pyramid: &Pyramid,
    cfg: &SolverConfig,
) -> Result<(ScalarGrid, SolveReport)> {
    cfg.validate()?;
    if div_fine.frame() != pyramid.finest() {
        return Err(ReconError::Input(
            "divergence does not live on the finest pyramid frame".into(),
        ));
    }
    let frames = pyramid.levels();
    // restrictions, finest first
    let mut divs = vec![div_fine.clone()];
    for frame in frames.iter().rev().skip(1) {
        let next = restrict_divergence(divs.last().unwrap(), frame)?;
        divs.push(next);
    }
    divs.reverse();

    let mut report = SolveReport::default();
    let mut u: Option<ScalarGrid> = None;
    let mut offset = 0;
    for (level, (frame, div)) in frames.iter().zip(&divs).enumerate() {
        let u0 = match u.take() {
            None => ScalarGrid::zeros(*frame),
            Some(coarse) => {
                let mut p = prolong(&coarse, frame)?;
                apply_boundary(&mut p, cfg.boundary);
                p
            }
        };
        let (sol, rep) = solve_level(div, &u0, cfg)?;
        info!(
            "level {level} ({}): {} sweeps, converged={}",
            frame.dims, rep.iterations_per_level[0], rep.converged
        );
        report.energy_trace.extend(rep.energy_trace.iter().map(|&(it, e)| (it + offset, e)));
        offset += rep.iterations_per_level[0];
        report.iterations_per_level.extend(rep.iterations_per_level);
        report.converged_per_level.extend(rep.converged_per_level);
        report.final_energy = rep.final_energy;
        report.converged = rep.converged;
        u = Some(sol);
    }
    Ok((u.expect("pyramid has at least one level"), report))
}
