//! Watertight surface reconstruction from oriented point clouds.
//!
//! The pipeline splats the oriented samples onto a voxel grid, takes the
//! divergence of the smoothed vector field and minimizes a convex
//! total-variation energy over a relaxed indicator function `u: V -> [0,1]`.
//! Thresholding the minimizer gives a binary inside/outside labelling whose
//! iso-surface is extracted with marching cubes.

pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod solver;
pub mod surface;

pub use error::{ReconError, Result};
pub use field::PointSample;
pub use grid::{GridDims, GridFrame, Pyramid, ScalarGrid, VectorGrid};
pub use solver::{Boundary, Mode, SolveReport, SolverConfig, SweepOrder};
pub use surface::TriangleMesh;
