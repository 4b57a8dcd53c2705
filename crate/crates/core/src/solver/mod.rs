//! Minimization of the relaxed indicator energy on a grid.
//!
//! The relaxed problem is convex: find `u` in `[0,1]` minimizing a weighted
//! regularizer of `|grad u|` minus the flux term `sum div * u`. Total-variation
//! mode is solved by lagged diffusivity (recompute `g`, then a few SOR sweeps
//! with `g` frozen); Poisson mode is the same iteration with `g = 1`.

mod energy;
mod multires;
mod sweep;

pub use energy::{energy, update_diffusivity};
pub use multires::{prolong, restrict_divergence, solve_multires};
pub use sweep::{sor_sweep, BLOCK, CHANGE_THRESHOLD, FULL_SWEEP_PERIOD};

use std::fmt;
use std::str::FromStr;

use log::debug;

use crate::error::{ReconError, Result};
use crate::grid::ScalarGrid;
use sweep::Sweeper;

/// Which regularizer `phi(|grad u|)` to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// `phi(s) = s`, total variation.
    #[default]
    Tv,
    /// `phi(s) = s^2`, leading to a Poisson equation.
    Poisson,
}

impl FromStr for Mode {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" => Ok(Mode::Tv),
            "poisson" | "l2" => Ok(Mode::Poisson),
            other => Err(ReconError::Config(format!("unknown mode '{other}' (expected tv|poisson)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Tv => "tv",
            Mode::Poisson => "poisson",
        })
    }
}

/// Treatment of the outermost vertex layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// `u = 0` on the outer layer; the exterior is outside the model.
    #[default]
    ZeroDirichlet,
    /// Every vertex is free; neighbours outside the grid are simply absent.
    Free,
}

impl FromStr for Boundary {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "dirichlet" => Ok(Boundary::ZeroDirichlet),
            "free" => Ok(Boundary::Free),
            other => Err(ReconError::Config(format!("unknown boundary '{other}' (expected zero|free)"))),
        }
    }
}

/// Visiting order of the SOR sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// In-place memory-order Gauss-Seidel sweep (the reference iteration).
    #[default]
    Lexicographic,
    /// Two-colour sweep whose half-steps run in parallel. A different
    /// iteration from the lexicographic one; opt-in only.
    RedBlack,
}

impl FromStr for SweepOrder {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lex" | "lexicographic" => Ok(SweepOrder::Lexicographic),
            "red-black" | "redblack" => Ok(SweepOrder::RedBlack),
            other => Err(ReconError::Config(format!(
                "unknown sweep order '{other}' (expected lex|red-black)"
            ))),
        }
    }
}

/// How the diffusivity of an edge is derived from the vertex diffusivities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EdgeWeight {
    /// `g_ij = (g_i + g_j) / 2`. Not a majorizer of the forward-difference
    /// energy; the lagged iteration can oscillate next to sharp interfaces.
    Average,
    /// The edge takes the diffusivity of the vertex whose forward difference
    /// it is. Each frozen-`g` system is then a majorizer of the smoothed
    /// energy and the outer iteration decreases it monotonically.
    #[default]
    Owner,
}

impl FromStr for EdgeWeight {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" | "avg" => Ok(EdgeWeight::Average),
            "owner" => Ok(EdgeWeight::Owner),
            other => Err(ReconError::Config(format!(
                "unknown edge weighting '{other}' (expected owner|average)"
            ))),
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 0.007;
pub const DEFAULT_OMEGA: f64 = 1.85;
pub const DEFAULT_EPSILON: f64 = 0.001;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Smoothness weight.
    pub lambda: f64,
    /// SOR relaxation factor, in (0, 2).
    pub omega: f64,
    /// Guard against infinite diffusivity where the gradient vanishes.
    pub epsilon: f64,
    pub mode: Mode,
    /// SOR sweeps between diffusivity updates (TV mode).
    pub g_update_stride: usize,
    /// Sweep budget per pyramid level.
    pub max_iters: usize,
    /// Stop once the relative energy change between checks drops below this.
    pub rel_energy_tol: f64,
    /// Pyramid levels for the coarse-to-fine driver.
    pub levels: usize,
    pub boundary: Boundary,
    pub sweep_order: SweepOrder,
    /// Skip 8^3 blocks far from any divergence and any recent change.
    pub skip_inactive: bool,
    pub edge_weight: EdgeWeight,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: DEFAULT_LAMBDA,
            omega: DEFAULT_OMEGA,
            epsilon: DEFAULT_EPSILON,
            mode: Mode::Tv,
            g_update_stride: 2,
            max_iters: 2000,
            rel_energy_tol: 1e-6,
            levels: 3,
            boundary: Boundary::ZeroDirichlet,
            sweep_order: SweepOrder::Lexicographic,
            skip_inactive: true,
            edge_weight: EdgeWeight::Owner,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ReconError::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return bad(format!("omega must lie in (0, 2), got {}", self.omega));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.g_update_stride == 0 {
            return bad("g update stride must be at least 1".into());
        }
        if self.max_iters == 0 {
            return bad("max iterations must be at least 1".into());
        }
        if !(self.rel_energy_tol > 0.0) {
            return bad(format!("energy tolerance must be positive, got {}", self.rel_energy_tol));
        }
        if self.levels == 0 {
            return bad("at least one pyramid level is required".into());
        }
        Ok(())
    }
}

/// What happened during a solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    /// SOR sweeps spent on each level, coarsest first.
    pub iterations_per_level: Vec<usize>,
    /// `(cumulative sweep count, energy)` at every energy check, including the
    /// initial guess of each level. Energies of different levels live on
    /// different grids and are not directly comparable.
    pub energy_trace: Vec<(usize, f64)>,
    /// Energy of the returned solution on its own grid (the lowest value in
    /// the trace of the last level).
    pub final_energy: f64,
    /// Whether the finest level met the energy tolerance.
    pub converged: bool,
    /// Convergence flag of each level, coarsest first.
    pub converged_per_level: Vec<bool>,
}

impl SolveReport {
    pub fn total_iterations(&self) -> usize {
        self.iterations_per_level.iter().sum()
    }

    /// Energy trace as `iteration,energy` CSV lines (with header).
    pub fn energy_csv(&self) -> String {
        let mut out = String::from("iteration,energy\n");
        for (it, e) in &self.energy_trace {
            out.push_str(&format!("{it},{e:.17e}\n"));
        }
        out
    }
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / cur.abs().max(1e-30)
}

/// Zero the outer vertex layer when the boundary is Dirichlet.
pub(crate) fn apply_boundary(u: &mut ScalarGrid, boundary: Boundary) {
    if boundary == Boundary::ZeroDirichlet {
        let dims = u.dims();
        crate::field::zero_outer_layers(u.data_mut(), dims, 1);
    }
}

/// Solve one grid level starting from `u0`.
///
/// TV mode alternates a diffusivity update with `g_update_stride` sweeps and
/// checks the energy after each group; Poisson mode checks after every sweep.
/// The returned field is the lowest-energy iterate seen (the initial guess
/// included). Hitting `max_iters` is not an error; the report then carries
/// `converged = false`.
pub fn solve_level(div: &ScalarGrid, u0: &ScalarGrid, cfg: &SolverConfig) -> Result<(ScalarGrid, SolveReport)> {
    cfg.validate()?;
    if div.frame() != u0.frame() {
        return Err(ReconError::Input("initial guess and divergence live on different grids".into()));
    }
    if u0.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(ReconError::Input("initial guess must lie in [0, 1]".into()));
    }
    let mut u = u0.clone();
    apply_boundary(&mut u, cfg.boundary);

    let unit_g = match cfg.mode {
        Mode::Poisson => Some(ScalarGrid::filled(*div.frame(), 1.0)),
        Mode::Tv => None,
    };
    let mut sweeper = Sweeper::new(div, cfg);
    let mut prev = energy(&u, div, cfg.lambda, cfg.mode);
    let mut trace = vec![(0, prev)];
    // With eps > 0 the iteration targets a smoothed energy and can drift
    // slightly upwards in the exact one, so the best iterate is kept.
    let mut best = u.clone();
    let mut best_energy = prev;
    let mut iters = 0;
    let mut converged = false;

    while iters < cfg.max_iters {
        match &unit_g {
            Some(g) => {
                sweeper.sweep(&mut u, g);
                iters += 1;
            }
            None => {
                let g = update_diffusivity(&u, cfg.epsilon);
                let steps = cfg.g_update_stride.min(cfg.max_iters - iters);
                for _ in 0..steps {
                    sweeper.sweep(&mut u, &g);
                }
                iters += steps;
            }
        }
        debug_assert!(u.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let e = energy(&u, div, cfg.lambda, cfg.mode);
        trace.push((iters, e));
        if e < best_energy {
            best_energy = e;
            best.data_mut().copy_from_slice(u.data());
        }
        let rel = relative_change(prev, e);
        prev = e;
        if rel < cfg.rel_energy_tol {
            converged = true;
            break;
        }
    }
    debug!(
        "level {}: {iters} sweeps, energy {best_energy:.6e} (last {prev:.6e}), converged={converged}",
        div.dims()
    );
    let report = SolveReport {
        iterations_per_level: vec![iters],
        energy_trace: trace,
        final_energy: best_energy,
        converged,
        converged_per_level: vec![converged],
    };
    Ok((best, report))
}

/// Residual `2 lambda * (Laplacian u) + div` of the Poisson system at every
/// updatable vertex, using the grid-unit 7-point Laplacian that the SOR
/// sweep inverts. Non-updatable vertices get 0.
pub fn poisson_residual(u: &ScalarGrid, div: &ScalarGrid, lambda: f64, boundary: Boundary) -> ScalarGrid {
    let dims = u.dims();
    let n = dims.as_array();
    let strides = dims.strides();
    let ud = u.data();
    ScalarGrid::from_fn(*u.frame(), |x, y, z| {
        let xyz = [x, y, z];
        if boundary == Boundary::ZeroDirichlet && dims.is_boundary(x, y, z) {
            return 0.0;
        }
        let i = dims.index(x, y, z);
        let mut lap = 0.0;
        for a in 0..3 {
            if xyz[a] > 0 {
                lap += ud[i - strides[a]] - ud[i];
            }
            if xyz[a] + 1 < n[a] {
                lap += ud[i + strides[a]] - ud[i];
            }
        }
        2.0 * lambda * lap + div.data()[i]
    })
}
