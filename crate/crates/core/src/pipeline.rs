//! End-to-end reconstruction: samples in, mesh out.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::error::{ReconError, Result};
use crate::field::{divergence_of_samples, PointSample};
use crate::grid::{build_frame, build_pyramid, GridFrame, Pyramid, ScalarGrid};
use crate::io::{read_cloud, write_mesh, OrientationSource};
use crate::solver::{solve_multires, SolveReport, SolverConfig};
use crate::surface::{
    inside_counts, marching_cubes, select_isovalue, smooth_binary, threshold, TriangleMesh, DEFAULT_MU,
    REPORT_THRESHOLDS,
};

pub const DEFAULT_GRID: usize = 256;
pub const DEFAULT_PADDING: f64 = 0.05;

/// Everything that shapes the reconstruction itself, independent of files.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconParams {
    pub solver: SolverConfig,
    /// Vertices along the longest axis of the finest grid.
    pub grid: usize,
    pub padding: f64,
    pub mu: f64,
    /// Debug: extract the relaxed solution at `mu` directly, skipping the
    /// binarize-and-smooth step.
    pub no_rebinarize: bool,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            solver: SolverConfig::default(),
            grid: DEFAULT_GRID,
            padding: DEFAULT_PADDING,
            mu: DEFAULT_MU,
            no_rebinarize: false,
        }
    }
}

/// All intermediate products of one reconstruction.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub pyramid: Pyramid,
    pub divergence: ScalarGrid,
    /// Relaxed minimizer with values in [0, 1].
    pub relaxed: ScalarGrid,
    /// Field the mesh was extracted from (smoothed binary, or the relaxed
    /// solution under `no_rebinarize`).
    pub extracted: ScalarGrid,
    pub isovalue: f64,
    pub inside_count: usize,
    pub mesh: TriangleMesh,
    pub report: SolveReport,
    pub peak_bytes: usize,
}

impl Reconstruction {
    pub fn frame(&self) -> &GridFrame {
        self.pyramid.finest()
    }
}

/// Bytes of the grids alive at the busiest stage. The field stage holds the
/// raw and smoothed vector fields plus one scratch component; the solver
/// holds divergence, solution, diffusivity and the best iterate on the
/// current level plus the coarser solution it was prolonged from; the
/// extraction stage holds the relaxed, binary and smoothed fields with one
/// scratch array and the divergence.
pub fn memory_estimate(pyramid: &Pyramid, mesh: Option<&TriangleMesh>) -> usize {
    const F: usize = std::mem::size_of::<f64>();
    let n = pyramid.finest().len();
    let field = 7 * n;
    let solve = pyramid
        .levels()
        .iter()
        .enumerate()
        .map(|(k, l)| 4 * l.len() + if k > 0 { pyramid.levels()[k - 1].len() } else { 0 })
        .max()
        .unwrap_or(0)
        + n;
    let extract = 5 * n;
    let mesh_bytes = mesh.map_or(0, |m| m.vertices.len() * 3 * F + m.triangles.len() * 3 * 4);
    field.max(solve).max(extract) * F + mesh_bytes
}

/// Run the whole reconstruction on in-memory samples.
pub fn reconstruct(samples: &[PointSample], params: &ReconParams) -> Result<Reconstruction> {
    params.solver.validate().map_err(|e| e.in_stage("config"))?;
    if !(params.mu > 0.0 && params.mu < 1.0) {
        return Err(ReconError::Config(format!("mu must lie in (0, 1), got {}", params.mu)).in_stage("config"));
    }
    let frame = build_frame(samples, params.grid, params.padding).map_err(|e| e.in_stage("grid"))?;
    let pyramid = build_pyramid(&frame, params.solver.levels).map_err(|e| e.in_stage("grid"))?;
    let fine = *pyramid.finest();
    info!("grid {} with h = {:.6e}", fine.dims, fine.h);

    let divergence = divergence_of_samples(samples, &fine).map_err(|e| e.in_stage("field"))?;
    let (relaxed, report) =
        solve_multires(&divergence, &pyramid, &params.solver).map_err(|e| e.in_stage("solve"))?;
    if !report.converged {
        warn!(
            "solver stopped at the iteration limit after {} sweeps; using the best iterate",
            report.total_iterations()
        );
    }

    let stage = |e: ReconError| e.in_stage("extract");
    let (binary, inside_count) = threshold(&relaxed, params.mu).map_err(stage)?;
    let (extracted, isovalue) = if params.no_rebinarize {
        (relaxed.clone(), params.mu)
    } else {
        let smooth = smooth_binary(&binary);
        let iso = select_isovalue(&smooth, samples).map_err(stage)?;
        (smooth, iso)
    };
    let mesh = marching_cubes(&extracted, isovalue);
    if mesh.is_empty() {
        warn!("isovalue {isovalue:.6} does not cross the field; the mesh is empty");
    }
    let peak_bytes = memory_estimate(&pyramid, Some(&mesh));
    Ok(Reconstruction { pyramid, divergence, relaxed, extracted, isovalue, inside_count, mesh, report, peak_bytes })
}

/// A file-to-file run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub params: ReconParams,
    pub orientation: OrientationSource,
    /// CSV energy log (`iteration,energy`).
    pub log: Option<PathBuf>,
    /// Inside counts at the report thresholds.
    pub report: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    /// Accepted for interface stability; the pipeline draws no random numbers.
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        RunConfig {
            input: input.into(),
            output: output.into(),
            params: ReconParams::default(),
            orientation: OrientationSource::Normals,
            log: None,
            report: None,
            threads: None,
            seed: None,
        }
    }
}

/// What a run reports on standard output.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub samples: usize,
    pub frame: GridFrame,
    pub iterations_per_level: Vec<usize>,
    pub converged: bool,
    pub final_energy: f64,
    pub isovalue: f64,
    pub inside_count: usize,
    pub vertices: usize,
    pub triangles: usize,
    pub peak_bytes: usize,
    pub wall_time: Duration,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let levels: Vec<String> = self.iterations_per_level.iter().map(usize::to_string).collect();
        writeln!(f, "samples        {}", self.samples)?;
        writeln!(f, "grid           {} (h = {:.6e})", self.frame.dims, self.frame.h)?;
        writeln!(f, "iterations     {} (coarse to fine)", levels.join(" / "))?;
        writeln!(f, "converged      {}", self.converged)?;
        writeln!(f, "final energy   {:.10e}", self.final_energy)?;
        writeln!(f, "inside         {}", self.inside_count)?;
        writeln!(f, "isovalue       {:.6}", self.isovalue)?;
        writeln!(f, "mesh           {} vertices, {} triangles", self.vertices, self.triangles)?;
        writeln!(f, "peak memory    {:.1} MiB (estimate)", self.peak_bytes as f64 / (1024.0 * 1024.0))?;
        write!(f, "wall time      {:.3} s", self.wall_time.as_secs_f64())
    }
}

/// Tab-separated inside counts, one `mu\tcount` line per threshold.
pub fn threshold_report(relaxed: &ScalarGrid) -> Result<String> {
    let mut out = String::from("mu\tinside_count\n");
    for (mu, count) in inside_counts(relaxed, &REPORT_THRESHOLDS)? {
        out.push_str(&format!("{mu}\t{count}\n"));
    }
    Ok(out)
}

fn run_inner(cfg: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let samples = read_cloud(&cfg.input, &cfg.orientation).map_err(|e| e.in_stage("read"))?;
    info!("read {} samples from {}", samples.len(), cfg.input.display());
    let rec = reconstruct(&samples, &cfg.params)?;

    let write_err = |e: ReconError| e.in_stage("write");
    write_mesh(&rec.mesh, &cfg.output).map_err(write_err)?;
    if let Some(path) = &cfg.log {
        fs::write(path, rec.report.energy_csv()).map_err(|e| write_err(ReconError::io(path, e)))?;
    }
    if let Some(path) = &cfg.report {
        let text = threshold_report(&rec.relaxed).map_err(write_err)?;
        fs::write(path, text).map_err(|e| write_err(ReconError::io(path, e)))?;
    }
    Ok(RunSummary {
        samples: samples.len(),
        frame: *rec.frame(),
        iterations_per_level: rec.report.iterations_per_level.clone(),
        converged: rec.report.converged,
        final_energy: rec.report.final_energy,
        isovalue: rec.isovalue,
        inside_count: rec.inside_count,
        vertices: rec.mesh.vertices.len(),
        triangles: rec.mesh.triangles.len(),
        peak_bytes: rec.peak_bytes,
        wall_time: start.elapsed(),
    })
}

/// Read, reconstruct and write, on a dedicated pool when a thread count is
/// given. Non-convergence is reported in the summary, not as an error.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    match cfg.threads {
        Some(0) => Err(ReconError::Config("thread count must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ReconError::Config(format!("cannot start {n} threads: {e}")))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}
