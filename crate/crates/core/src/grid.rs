//! Uniform vertex-centred 3D grids.
//!
//! All grids store their values in one flat vector in lexicographic order,
//! `index = x + nx * (y + ny * z)`, so the six axis neighbours of a vertex sit
//! at the constant offsets `±1`, `±nx` and `±nx*ny`.

use nalgebra::{Point3, Vector3};

use crate::error::{ReconError, Result};
use crate::field::PointSample;

/// Vertex counts per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(ReconError::Config(format!(
                "grid needs at least 2 vertices per axis, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|n| n.checked_mul(nz))
            .ok_or_else(|| ReconError::Config(format!("grid {nx}x{ny}x{nz} is not addressable")))?;
        Ok(GridDims { nx, ny, nz })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    #[inline]
    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Total number of vertices.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat offsets of the +x, +y and +z neighbours.
    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [1, self.nx, self.nx * self.ny]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(
            x < self.nx && y < self.ny && z < self.nz,
            "vertex ({x},{y},{z}) outside {}x{}x{}",
            self.nx,
            self.ny,
            self.nz
        );
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn unindex(&self, i: usize) -> [usize; 3] {
        debug_assert!(i < self.len());
        let x = i % self.nx;
        let yz = i / self.nx;
        [x, yz % self.ny, yz / self.ny]
    }

    /// True for vertices on the outermost layer of the grid.
    #[inline]
    pub fn is_boundary(&self, x: usize, y: usize, z: usize) -> bool {
        x == 0 || y == 0 || z == 0 || x + 1 == self.nx || y + 1 == self.ny || z + 1 == self.nz
    }

    /// Minimum distance (in vertices) to the outermost layer.
    #[inline]
    pub fn boundary_distance(&self, x: usize, y: usize, z: usize) -> usize {
        [x, y, z, self.nx - 1 - x, self.ny - 1 - y, self.nz - 1 - z]
            .into_iter()
            .min()
            .unwrap()
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Placement of a grid in world space: vertex `(x,y,z)` sits at
/// `origin + h * (x,y,z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridFrame {
    pub origin: Point3<f64>,
    pub h: f64,
    pub dims: GridDims,
}

impl GridFrame {
    pub fn new(origin: Point3<f64>, h: f64, dims: GridDims) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ReconError::Config(format!("grid spacing must be positive, got {h}")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(ReconError::Config("grid origin must be finite".into()));
        }
        Ok(GridFrame { origin, h, dims })
    }

    /// Unit-spaced frame at the world origin, mostly for tests and oracles.
    pub fn unit(dims: GridDims) -> Self {
        GridFrame { origin: Point3::origin(), h: 1.0, dims }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        self.dims.index(x, y, z)
    }

    #[inline]
    pub fn world(&self, x: usize, y: usize, z: usize) -> Point3<f64> {
        Point3::new(
            self.origin.x + self.h * x as f64,
            self.origin.y + self.h * y as f64,
            self.origin.z + self.h * z as f64,
        )
    }

    /// Continuous grid coordinates of a world point.
    #[inline]
    pub fn to_grid(&self, p: &Point3<f64>) -> Vector3<f64> {
        (p - self.origin) / self.h
    }

    /// Upper corner of the grid volume.
    pub fn max_corner(&self) -> Point3<f64> {
        let [nx, ny, nz] = self.dims.as_array();
        self.world(nx - 1, ny - 1, nz - 1)
    }

    /// Locate the cell containing `p` and the fractional position inside it.
    ///
    /// Points on the upper faces of the grid volume are assigned to the last
    /// cell with fraction 1. Returns `None` outside the volume.
    pub fn locate(&self, p: &Point3<f64>) -> Option<([usize; 3], [f64; 3])> {
        let g = self.to_grid(p);
        let dims = self.dims.as_array();
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let c = g[a];
            let upper = (dims[a] - 1) as f64;
            // allow a hair of slack for points that were placed on the box faces
            let slack = 1e-9 * upper.max(1.0);
            if !(c >= -slack && c <= upper + slack) {
                return None;
            }
            let c = c.clamp(0.0, upper);
            let i = (c.floor() as usize).min(dims[a] - 2);
            cell[a] = i;
            frac[a] = c - i as f64;
        }
        Some((cell, frac))
    }

    /// The same volume at half resolution, sharing this frame's origin.
    ///
    /// Requires odd vertex counts so that coarse vertex `(x,y,z)` coincides
    /// with fine vertex `(2x,2y,2z)`.
    pub fn coarsened(&self) -> Result<Self> {
        let d = self.dims.as_array();
        if d.iter().any(|n| n % 2 == 0) {
            return Err(ReconError::Config(format!(
                "cannot coarsen {} (vertex counts must be odd)",
                self.dims
            )));
        }
        let dims = GridDims::new((d[0] - 1) / 2 + 1, (d[1] - 1) / 2 + 1, (d[2] - 1) / 2 + 1)?;
        GridFrame::new(self.origin, 2.0 * self.h, dims)
    }
}

/// A scalar value at every grid vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    frame: GridFrame,
    data: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(frame: GridFrame) -> Self {
        Self::filled(frame, 0.0)
    }

    pub fn filled(frame: GridFrame, value: f64) -> Self {
        ScalarGrid { frame, data: vec![value; frame.len()] }
    }

    pub fn from_vec(frame: GridFrame, data: Vec<f64>) -> Result<Self> {
        if data.len() != frame.len() {
            return Err(ReconError::Input(format!(
                "grid {} needs {} values, got {}",
                frame.dims,
                frame.len(),
                data.len()
            )));
        }
        Ok(ScalarGrid { frame, data })
    }

    /// Build a grid by evaluating `f` at every vertex.
    pub fn from_fn(frame: GridFrame, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(frame.len());
        let [nx, ny, nz] = frame.dims.as_array();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        ScalarGrid { frame, data }
    }

    #[inline]
    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.frame.dims
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.frame.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.frame.index(x, y, z);
        self.data[i] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Trilinear interpolation at a world position; `None` outside the grid.
    pub fn sample(&self, p: &Point3<f64>) -> Option<f64> {
        let ([x, y, z], [fx, fy, fz]) = self.frame.locate(p)?;
        let [sx, sy, sz] = self.frame.dims.strides();
        let i = self.frame.index(x, y, z);
        let d = &self.data;
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let c00 = lerp(d[i], d[i + sx], fx);
        let c10 = lerp(d[i + sy], d[i + sy + sx], fx);
        let c01 = lerp(d[i + sz], d[i + sz + sx], fx);
        let c11 = lerp(d[i + sz + sy], d[i + sz + sy + sx], fx);
        Some(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz))
    }
}

/// Three co-located scalar components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorGrid {
    frame: GridFrame,
    comp: [Vec<f64>; 3],
}

impl VectorGrid {
    pub fn zeros(frame: GridFrame) -> Self {
        let n = frame.len();
        VectorGrid { frame, comp: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn from_components(frame: GridFrame, comp: [Vec<f64>; 3]) -> Result<Self> {
        if comp.iter().any(|c| c.len() != frame.len()) {
            return Err(ReconError::Input(format!(
                "vector grid components must each hold {} values",
                frame.len()
            )));
        }
        Ok(VectorGrid { frame, comp })
    }

    #[inline]
    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comp[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comp[axis]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comp
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.comp
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        let i = self.frame.index(x, y, z);
        Vector3::new(self.comp[0][i], self.comp[1][i], self.comp[2][i])
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: Vector3<f64>) {
        let i = self.frame.index(x, y, z);
        for a in 0..3 {
            self.comp[a][i] = v[a];
        }
    }

    /// Per-component sums.
    pub fn sums(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.comp[a].iter().sum())
    }

    /// Sum of Euclidean magnitudes over all vertices.
    pub fn total_magnitude(&self) -> f64 {
        (0..self.frame.len())
            .map(|i| {
                let (a, b, c) = (self.comp[0][i], self.comp[1][i], self.comp[2][i]);
                (a * a + b * b + c * c).sqrt()
            })
            .sum()
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for c in out.comp.iter_mut() {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        out
    }
}

/// Coarse-to-fine sequence of frames sharing one origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    levels: Vec<GridFrame>,
}

impl Pyramid {
    /// Frames ordered coarsest first.
    pub fn levels(&self) -> &[GridFrame] {
        &self.levels
    }

    pub fn finest(&self) -> &GridFrame {
        self.levels.last().unwrap()
    }

    pub fn coarsest(&self) -> &GridFrame {
        &self.levels[0]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Smallest `n' >= n` with `n' - 1` divisible by `2^(levels-1)`.
pub fn pyramid_compatible(n: usize, levels: usize) -> usize {
    let step = 1usize << (levels - 1);
    let cells = n - 1;
    cells.div_ceil(step) * step + 1
}

/// Coarsest level must keep an interior vertex on every axis.
const MIN_COARSE_VERTICES: usize = 3;

/// Build a vertex-centred pyramid of `levels` frames ending at `finest`.
///
/// Vertex counts are padded upwards (at the high end of each axis) to the
/// nearest size that survives `levels - 1` halvings.
pub fn build_pyramid(finest: &GridFrame, levels: usize) -> Result<Pyramid> {
    if levels == 0 {
        return Err(ReconError::Config("pyramid needs at least one level".into()));
    }
    if levels > 16 {
        return Err(ReconError::Config(format!("{levels} pyramid levels is not supported")));
    }
    if levels == 1 {
        return Ok(Pyramid { levels: vec![*finest] });
    }
    let step = 1usize << (levels - 1);
    let requested = finest.dims.as_array();
    let longest = *requested.iter().max().unwrap();
    if (pyramid_compatible(longest, levels) - 1) / step + 1 < MIN_COARSE_VERTICES {
        return Err(ReconError::Config(format!(
            "{levels} levels leave fewer than {MIN_COARSE_VERTICES} vertices per axis at the coarsest \
             level of a {} grid",
            finest.dims
        )));
    }
    let min_fine = (MIN_COARSE_VERTICES - 1) * step + 1;
    let padded = requested.map(|n| pyramid_compatible(n.max(min_fine), levels));
    let dims = GridDims::new(padded[0], padded[1], padded[2])?;
    let mut frame = GridFrame::new(finest.origin, finest.h, dims)?;
    let mut levels_fine_first = vec![frame];
    for _ in 1..levels {
        frame = frame.coarsened()?;
        levels_fine_first.push(frame);
    }
    levels_fine_first.reverse();
    Ok(Pyramid { levels: levels_fine_first })
}

/// Fit a grid around a point cloud.
///
/// The longest padded axis receives `target_max_dim` vertices; other axes are
/// sized to cover their padded extent with the same cubical spacing and are
/// centred on the cloud.
pub fn build_frame(
    points: &[PointSample],
    target_max_dim: usize,
    padding_fraction: f64,
) -> Result<GridFrame> {
    if points.is_empty() {
        return Err(ReconError::Input("cannot fit a grid to an empty point set".into()));
    }
    if target_max_dim < 2 {
        return Err(ReconError::Config(format!(
            "grid resolution must be at least 2, got {target_max_dim}"
        )));
    }
    if !(padding_fraction >= 0.0 && padding_fraction.is_finite()) {
        return Err(ReconError::Config(format!(
            "padding fraction must be non-negative, got {padding_fraction}"
        )));
    }
    let mut lo = Point3::from([f64::INFINITY; 3]);
    let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
    for s in points {
        for a in 0..3 {
            lo[a] = lo[a].min(s.p[a]);
            hi[a] = hi[a].max(s.p[a]);
        }
    }
    let extent = hi - lo;
    let mut padded = extent * (1.0 + 2.0 * padding_fraction);
    let mut longest = padded.max();
    if longest <= 0.0 {
        // every point coincides: use a unit box around it
        longest = 1.0;
        padded = Vector3::repeat(1.0);
    }
    let h = longest / (target_max_dim - 1) as f64;
    let mut dims = [0usize; 3];
    let mut origin = Point3::origin();
    for a in 0..3 {
        let n = if padded[a] >= longest {
            target_max_dim
        } else if extent[a] <= 0.0 {
            // degenerate axis: two cells around the flat cloud
            3
        } else {
            let cells = (padded[a] / h - 1e-9).ceil().max(1.0) as usize;
            cells + 1
        };
        dims[a] = n.max(2);
        let centre = 0.5 * (lo[a] + hi[a]);
        origin[a] = centre - 0.5 * (dims[a] - 1) as f64 * h;
    }
    GridFrame::new(origin, h, GridDims::new(dims[0], dims[1], dims[2])?)
}
