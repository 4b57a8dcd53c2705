//! Successive over-relaxation sweeps for the lagged-diffusivity system.
//!
//! At every updatable vertex `i` with neighbour set `N(i)`:
//!
//! ```text
//! u_i <- (1 - w) u_i + w (c * sum_j g_ij u_j + div_i) / (c * sum_j g_ij)
//! ```
//!
//! with `c = lambda` in TV mode and `c = 2 lambda` in Poisson mode, followed
//! by a clamp to `[0, 1]`. The edge diffusivity `g_ij` is either the average
//! `(g_i + g_j) / 2` or, by default, `g` of the edge's lower endpoint (the
//! vertex whose forward difference contains the edge). The lexicographic sweep
//! updates in place, so neighbours earlier in memory order already hold their
//! new values.

use rayon::prelude::*;

use super::{Boundary, EdgeWeight, Mode, SolverConfig, SweepOrder};
use crate::grid::{GridDims, ScalarGrid};

/// Edge length (in vertices) of the blocks used for activity tracking.
pub const BLOCK: usize = 8;
/// Every this many sweeps all blocks are visited regardless of activity.
pub const FULL_SWEEP_PERIOD: usize = 16;
/// A block counts as changed when some vertex moved by more than this.
pub const CHANGE_THRESHOLD: f64 = 1e-9;

#[inline(always)]
fn relax_interior(
    u: &mut [f64],
    g: &[f64],
    div: f64,
    i: usize,
    strides: [usize; 3],
    k: Kernel,
) -> f64 {
    let gi = g[i];
    let mut num = 0.0;
    let mut den = 0.0;
    for s in strides {
        let (a, b) = (i - s, i + s);
        let (ga, gb) = match k.weights {
            EdgeWeight::Average => (0.5 * (gi + g[a]), 0.5 * (gi + g[b])),
            EdgeWeight::Owner => (g[a], gi),
        };
        num += ga * u[a] + gb * u[b];
        den += ga + gb;
    }
    let old = u[i];
    let target = (k.coeff * num + div) / (k.coeff * den);
    let new = ((1.0 - k.omega) * old + k.omega * target).clamp(0.0, 1.0);
    u[i] = new;
    (new - old).abs()
}

/// Relaxed value of vertex `xyz` with explicit bounds checks, for vertices
/// on the grid boundary under free boundary conditions.
#[inline]
fn relaxed_value(
    u: &[f64],
    g: &[f64],
    div: f64,
    xyz: [usize; 3],
    dims: GridDims,
    k: Kernel,
) -> f64 {
    let n = dims.as_array();
    let strides = dims.strides();
    let i = xyz[0] + n[0] * (xyz[1] + n[1] * xyz[2]);
    let gi = g[i];
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..3 {
        if xyz[a] > 0 {
            let j = i - strides[a];
            let gij = match k.weights {
                EdgeWeight::Average => 0.5 * (gi + g[j]),
                EdgeWeight::Owner => g[j],
            };
            num += gij * u[j];
            den += gij;
        }
        if xyz[a] + 1 < n[a] {
            let j = i + strides[a];
            let gij = match k.weights {
                EdgeWeight::Average => 0.5 * (gi + g[j]),
                EdgeWeight::Owner => gi,
            };
            num += gij * u[j];
            den += gij;
        }
    }
    let old = u[i];
    if den == 0.0 {
        return old;
    }
    let target = (k.coeff * num + div) / (k.coeff * den);
    ((1.0 - k.omega) * old + k.omega * target).clamp(0.0, 1.0)
}

#[inline]
fn relax_general(
    u: &mut [f64],
    g: &[f64],
    div: f64,
    xyz: [usize; 3],
    dims: GridDims,
    k: Kernel,
) -> f64 {
    let i = dims.index(xyz[0], xyz[1], xyz[2]);
    let old = u[i];
    let new = relaxed_value(u, g, div, xyz, dims, k);
    u[i] = new;
    (new - old).abs()
}

/// Per-vertex update parameters shared by every sweep variant.
#[derive(Clone, Copy, Debug)]
struct Kernel {
    coeff: f64,
    omega: f64,
    weights: EdgeWeight,
}

impl Kernel {
    fn new(cfg: &SolverConfig) -> Self {
        let coeff = match cfg.mode {
            Mode::Tv => cfg.lambda,
            Mode::Poisson => 2.0 * cfg.lambda,
        };
        Kernel { coeff, omega: cfg.omega, weights: cfg.edge_weight }
    }
}

/// Block-activity bookkeeping for skipping quiescent regions.
#[derive(Clone, Debug)]
struct ActiveBlocks {
    nb: [usize; 3],
    /// Blocks within one block of a non-zero divergence.
    forced: Vec<bool>,
    active: Vec<bool>,
    changed: Vec<bool>,
}

impl ActiveBlocks {
    fn new(div: &ScalarGrid) -> Self {
        let dims = div.dims();
        let nb = dims.as_array().map(|n| n.div_ceil(BLOCK));
        let count = nb[0] * nb[1] * nb[2];
        let mut has_div = vec![false; count];
        for (i, &d) in div.data().iter().enumerate() {
            if d != 0.0 {
                let [x, y, z] = dims.unindex(i);
                has_div[x / BLOCK + nb[0] * (y / BLOCK + nb[1] * (z / BLOCK))] = true;
            }
        }
        let forced = dilate(&has_div, nb);
        ActiveBlocks { nb, forced, active: vec![true; count], changed: vec![false; count] }
    }

    fn plan(&mut self, full: bool) {
        if full {
            self.active.iter_mut().for_each(|a| *a = true);
        } else {
            let near_change = dilate(&self.changed, self.nb);
            for (a, (f, c)) in self.active.iter_mut().zip(self.forced.iter().zip(near_change)) {
                *a = *f || c;
            }
        }
        self.changed.iter_mut().for_each(|c| *c = false);
    }

    #[inline]
    fn block(&self, bx: usize, by: usize, bz: usize) -> usize {
        bx + self.nb[0] * (by + self.nb[1] * bz)
    }
}

/// 26-neighbourhood dilation of a block mask.
fn dilate(mask: &[bool], nb: [usize; 3]) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for bz in 0..nb[2] {
        for by in 0..nb[1] {
            for bx in 0..nb[0] {
                if !mask[bx + nb[0] * (by + nb[1] * bz)] {
                    continue;
                }
                for z in bz.saturating_sub(1)..(bz + 2).min(nb[2]) {
                    for y in by.saturating_sub(1)..(by + 2).min(nb[1]) {
                        for x in bx.saturating_sub(1)..(bx + 2).min(nb[0]) {
                            out[x + nb[0] * (y + nb[1] * z)] = true;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Stateful sweeper used by the level solver.
pub(crate) struct Sweeper<'a> {
    div: &'a ScalarGrid,
    kernel: Kernel,
    boundary: Boundary,
    order: SweepOrder,
    blocks: Option<ActiveBlocks>,
    sweeps: usize,
}

impl<'a> Sweeper<'a> {
    pub(crate) fn new(div: &'a ScalarGrid, cfg: &SolverConfig) -> Self {
        let blocks = (cfg.skip_inactive && cfg.sweep_order == SweepOrder::Lexicographic)
            .then(|| ActiveBlocks::new(div));
        Sweeper {
            div,
            kernel: Kernel::new(cfg),
            boundary: cfg.boundary,
            order: cfg.sweep_order,
            blocks,
            sweeps: 0,
        }
    }

    /// One sweep; returns the largest absolute change of any vertex.
    pub(crate) fn sweep(&mut self, u: &mut ScalarGrid, g: &ScalarGrid) -> f64 {
        let full = self.sweeps % FULL_SWEEP_PERIOD == 0;
        self.sweeps += 1;
        match self.order {
            SweepOrder::Lexicographic => {
                if let Some(b) = self.blocks.as_mut() {
                    b.plan(full);
                }
                lexicographic(u, g, self.div, self.kernel, self.boundary, self.blocks.as_mut())
            }
            SweepOrder::RedBlack => red_black(u, g, self.div, self.kernel, self.boundary),
        }
    }
}

fn lexicographic(
    u: &mut ScalarGrid,
    g: &ScalarGrid,
    div: &ScalarGrid,
    k: Kernel,
    boundary: Boundary,
    mut blocks: Option<&mut ActiveBlocks>,
) -> f64 {
    let dims = u.dims();
    let [nx, ny, nz] = dims.as_array();
    let strides = dims.strides();
    let (g, d) = (g.data(), div.data());
    let u = u.data_mut();
    let lo = match boundary {
        Boundary::ZeroDirichlet => 1,
        Boundary::Free => 0,
    };
    let mut max_change = 0.0f64;
    for z in lo..nz - lo {
        for y in lo..ny - lo {
            let (by, bz) = (y / BLOCK, z / BLOCK);
            let row_edge = y == 0 || z == 0 || y + 1 == ny || z + 1 == nz;
            let mut x0 = lo;
            while x0 < nx - lo {
                let bx = x0 / BLOCK;
                let x1 = ((bx + 1) * BLOCK).min(nx - lo);
                let block = blocks.as_ref().map(|b| b.block(bx, by, bz));
                if let (Some(b), Some(k)) = (blocks.as_ref(), block) {
                    if !b.active[k] {
                        x0 = x1;
                        continue;
                    }
                }
                let mut block_change = 0.0f64;
                for x in x0..x1 {
                    let i = x + nx * (y + ny * z);
                    let change = if row_edge || x == 0 || x + 1 == nx {
                        relax_general(u, g, d[i], [x, y, z], dims, k)
                    } else {
                        relax_interior(u, g, d[i], i, strides, k)
                    };
                    block_change = block_change.max(change);
                }
                if let (Some(b), Some(k)) = (blocks.as_mut(), block) {
                    if block_change > CHANGE_THRESHOLD {
                        b.changed[k] = true;
                    }
                }
                max_change = max_change.max(block_change);
                x0 = x1;
            }
        }
    }
    max_change
}

/// Two-colour sweep: all vertices of one parity depend only on the other
/// parity, so each half-sweep is computed in parallel and then written back.
fn red_black(
    u: &mut ScalarGrid,
    g: &ScalarGrid,
    div: &ScalarGrid,
    k: Kernel,
    boundary: Boundary,
) -> f64 {
    let dims = u.dims();
    let [nx, ny, nz] = dims.as_array();
    let lo = match boundary {
        Boundary::ZeroDirichlet => 1,
        Boundary::Free => 0,
    };
    let mut max_change = 0.0f64;
    for colour in 0..2 {
        let snapshot = u.data();
        let updates: Vec<Vec<(usize, f64)>> = (lo..nz - lo)
            .into_par_iter()
            .map(|z| {
                let mut out = Vec::new();
                for y in lo..ny - lo {
                    for x in lo..nx - lo {
                        if (x + y + z) % 2 != colour {
                            continue;
                        }
                        let i = x + nx * (y + ny * z);
                        let v = relaxed_value(snapshot, g.data(), div.data()[i], [x, y, z], dims, k);
                        out.push((i, v));
                    }
                }
                out
            })
            .collect();
        let data = u.data_mut();
        for (i, v) in updates.into_iter().flatten() {
            max_change = max_change.max((v - data[i]).abs());
            data[i] = v;
        }
    }
    max_change
}

/// One canonical lexicographic SOR sweep over every updatable vertex.
///
/// Under [`Boundary::ZeroDirichlet`] the outermost vertex layer is left
/// untouched; callers keep it at zero.
pub fn sor_sweep(u: &mut ScalarGrid, g: &ScalarGrid, div: &ScalarGrid, cfg: &SolverConfig) {
    assert_eq!(u.frame(), div.frame(), "u and div must share a frame");
    assert_eq!(u.frame(), g.frame(), "u and g must share a frame");
    lexicographic(u, g, div, Kernel::new(cfg), cfg.boundary, None);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFrame;
    use crate::solver::Mode;
    use approx::assert_relative_eq;

    fn frame(n: usize) -> GridFrame {
        GridFrame::unit(GridDims::cubic(n).unwrap())
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let f = frame(6);
        let mut u = ScalarGrid::zeros(f);
        let g = ScalarGrid::filled(f, 3.0);
        let div = ScalarGrid::zeros(f);
        let cfg = SolverConfig::default();
        for _ in 0..5 {
            sor_sweep(&mut u, &g, &div, &cfg);
        }
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_touch_of_isolated_source() {
        let f = frame(5);
        let g0 = 2.5;
        let g = ScalarGrid::filled(f, g0);
        for (d, lambda) in [(0.3, 0.1), (50.0, 0.01)] {
            let mut div = ScalarGrid::zeros(f);
            div.set(2, 2, 2, d);
            let mut u = ScalarGrid::zeros(f);
            let cfg = SolverConfig { lambda, ..SolverConfig::default() };
            sor_sweep(&mut u, &g, &div, &cfg);
            let expect = (cfg.omega * d / (6.0 * lambda * g0)).min(1.0);
            assert_relative_eq!(u.get(2, 2, 2), expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn poisson_uses_doubled_coefficient() {
        let f = frame(5);
        let g = ScalarGrid::filled(f, 1.0);
        let mut div = ScalarGrid::zeros(f);
        div.set(2, 2, 2, 0.06);
        let mut u = ScalarGrid::zeros(f);
        let cfg = SolverConfig { lambda: 0.1, mode: Mode::Poisson, ..SolverConfig::default() };
        sor_sweep(&mut u, &g, &div, &cfg);
        assert_relative_eq!(u.get(2, 2, 2), cfg.omega * 0.06 / (6.0 * 0.2), max_relative = 1e-14);
    }

    #[test]
    fn dirichlet_boundary_untouched() {
        let f = frame(4);
        let mut u = ScalarGrid::zeros(f);
        let g = ScalarGrid::filled(f, 1.0);
        let div = ScalarGrid::filled(f, 5.0);
        sor_sweep(&mut u, &g, &div, &SolverConfig::default());
        let d = f.dims;
        for i in 0..f.len() {
            let [x, y, z] = d.unindex(i);
            if d.is_boundary(x, y, z) {
                assert_eq!(u.data()[i], 0.0);
            } else {
                assert_eq!(u.data()[i], 1.0);
            }
        }
    }

    #[test]
    fn free_boundary_updates_everything() {
        let f = GridFrame::unit(GridDims::new(2, 2, 3).unwrap());
        let mut u = ScalarGrid::zeros(f);
        let g = ScalarGrid::filled(f, 1.0);
        let div = ScalarGrid::filled(f, 5.0);
        let cfg = SolverConfig { boundary: Boundary::Free, ..SolverConfig::default() };
        sor_sweep(&mut u, &g, &div, &cfg);
        assert!(u.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn block_skipping_matches_full_sweeps_on_sparse_source() {
        let f = frame(40);
        let mut div = ScalarGrid::zeros(f);
        div.set(20, 20, 20, 0.5);
        div.set(21, 20, 20, -0.5);
        let g = ScalarGrid::filled(f, 1.0);
        let mut cfg = SolverConfig { mode: Mode::Poisson, lambda: 0.05, ..SolverConfig::default() };
        let mut skip_u = ScalarGrid::zeros(f);
        let mut sweeper = Sweeper::new(&div, &cfg);
        for _ in 0..40 {
            sweeper.sweep(&mut skip_u, &g);
        }
        cfg.skip_inactive = false;
        let mut full_u = ScalarGrid::zeros(f);
        let mut sweeper = Sweeper::new(&div, &cfg);
        for _ in 0..40 {
            sweeper.sweep(&mut full_u, &g);
        }
        let diff = skip_u
            .data()
            .iter()
            .zip(full_u.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn dilation_covers_neighbourhood() {
        let nb = [3, 3, 3];
        let mut m = vec![false; 27];
        m[13] = true;
        assert!(dilate(&m, nb).iter().all(|&b| b));
        let mut m = vec![false; 27];
        m[0] = true;
        assert_eq!(dilate(&m, nb).iter().filter(|&&b| b).count(), 8);
    }
}
