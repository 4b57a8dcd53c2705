//! Verification machinery: synthetic clouds, point-to-mesh distance and the
//! exhaustive binary minimizer for tiny grids.

mod distance;
mod exhaustive;
mod synthetic;

pub use distance::{closest_point_on_triangle, point_distances, rms_distance, rms_distance_brute_force, MeshDistance};
pub use exhaustive::{exhaustive_binary_min, MAX_FREE_VERTICES};
pub use synthetic::{generate_cloud, Shape, SyntheticCloudSpec};
