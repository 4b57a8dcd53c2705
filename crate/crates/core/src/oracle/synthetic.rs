use std::f64::consts::PI;

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ReconError, Result};
use crate::field::PointSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Shape {
    #[default]
    Sphere,
}

/// Recipe for a seeded synthetic point cloud.
///
/// `count` candidates are drawn area-uniformly; the hole and the density skew
/// then discard some of them, so the returned cloud can be smaller.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCloudSpec {
    pub shape: Shape,
    pub count: usize,
    pub radius: f64,
    /// Angular radius (radians) of the cap around the +z pole left empty.
    pub hole_cap_angle: f64,
    /// The z >= 0 hemisphere keeps every candidate, the z < 0 hemisphere
    /// keeps each with probability `1 / density_skew`.
    pub density_skew: f64,
    /// Standard deviation of radial position noise.
    pub noise_sigma: f64,
    /// Each normal is tilted by an angle drawn uniformly from
    /// `[0, orientation_error_deg]` about a random tangent axis.
    pub orientation_error_deg: f64,
    pub seed: u64,
}

impl Default for SyntheticCloudSpec {
    fn default() -> Self {
        SyntheticCloudSpec {
            shape: Shape::Sphere,
            count: 180,
            radius: 1.0,
            hole_cap_angle: 0.0,
            density_skew: 1.0,
            noise_sigma: 0.0,
            orientation_error_deg: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticCloudSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ReconError::Config(m));
        if self.count == 0 {
            return bad("synthetic cloud needs a positive count".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if !(self.hole_cap_angle >= 0.0 && self.hole_cap_angle <= PI) {
            return bad(format!("hole cap angle must lie in [0, pi], got {}", self.hole_cap_angle));
        }
        if !(self.density_skew >= 1.0 && self.density_skew.is_finite()) {
            return bad(format!("density skew must be >= 1, got {}", self.density_skew));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.orientation_error_deg >= 0.0 && self.orientation_error_deg < 180.0) {
            return bad(format!(
                "orientation error must lie in [0, 180) degrees, got {}",
                self.orientation_error_deg
            ));
        }
        Ok(())
    }
}

/// Unit vector perpendicular to `n`, rotated by `phi` around it.
fn tangent(n: &Vector3<f64>, phi: f64) -> Vector3<f64> {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    t1 * phi.cos() + t2 * phi.sin()
}

/// Generate the cloud described by `spec`. The same spec always yields the
/// same cloud: every candidate consumes a fixed number of random draws
/// whether or not it is kept.
pub fn generate_cloud(spec: &SyntheticCloudSpec) -> Result<Vec<PointSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cap_cos = spec.hole_cap_angle.cos();
    let keep_lower = 1.0 / spec.density_skew;
    let max_tilt = spec.orientation_error_deg.to_radians();
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        // Archimedes: z uniform on [-1, 1] is area-uniform on the sphere
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let keep: f64 = rng.random();
        let noise: f64 = rng.sample(StandardNormal);
        let axis_phi: f64 = rng.random_range(0.0..2.0 * PI);
        let tilt: f64 = rng.random();

        let s = (1.0 - z * z).max(0.0).sqrt();
        let dir = Vector3::new(s * phi.cos(), s * phi.sin(), z);
        if spec.hole_cap_angle > 0.0 && z > cap_cos {
            continue;
        }
        if z < 0.0 && keep >= keep_lower {
            continue;
        }
        let r = spec.radius + spec.noise_sigma * noise;
        let mut normal = dir;
        if max_tilt > 0.0 {
            let axis = Unit::new_normalize(tangent(&dir, axis_phi));
            normal = Rotation3::from_axis_angle(&axis, tilt * max_tilt) * dir;
        }
        out.push(PointSample::new(Point3::from(dir * r), normal)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sphere() {
        let spec = SyntheticCloudSpec { count: 180, radius: 2.5, seed: 7, ..Default::default() };
        let pts = generate_cloud(&spec).unwrap();
        assert_eq!(pts.len(), 180);
        for s in &pts {
            assert!((s.p.coords.norm() - 2.5).abs() < 1e-12);
            assert!((s.v - s.p.coords / 2.5).norm() < 1e-12);
        }
        assert_eq!(pts, generate_cloud(&spec).unwrap());
        let other = generate_cloud(&SyntheticCloudSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(pts, other);
    }

    #[test]
    fn area_uniform_moments() {
        let spec = SyntheticCloudSpec { count: 40_000, seed: 1, ..Default::default() };
        let pts = generate_cloud(&spec).unwrap();
        let n = pts.len() as f64;
        // E[z] = 0, E[z^2] = 1/3 for the uniform sphere; 4 sigma bounds
        let mz: f64 = pts.iter().map(|s| s.p.z).sum::<f64>() / n;
        let mz2: f64 = pts.iter().map(|s| s.p.z * s.p.z).sum::<f64>() / n;
        assert!(mz.abs() < 4.0 * (1.0f64 / 3.0 / n).sqrt());
        assert!((mz2 - 1.0 / 3.0).abs() < 4.0 * (4.0f64 / 45.0 / n).sqrt());
    }

    #[test]
    fn hole_cap_is_empty() {
        let spec = SyntheticCloudSpec { count: 5000, hole_cap_angle: PI / 3.0, seed: 2, ..Default::default() };
        let pts = generate_cloud(&spec).unwrap();
        assert!(pts.iter().all(|s| s.p.z.acos() >= PI / 3.0));
        // cap area fraction (1 - cos 60deg) / 2 = 1/4
        let expected = 5000.0 * 0.75;
        assert!((pts.len() as f64 - expected).abs() < 4.0 * (5000.0f64 * 0.25 * 0.75).sqrt());
    }

    #[test]
    fn density_skew_ratio() {
        let spec = SyntheticCloudSpec { count: 100_000, density_skew: 50.0, seed: 3, ..Default::default() };
        let pts = generate_cloud(&spec).unwrap();
        let upper = pts.iter().filter(|s| s.p.z >= 0.0).count() as f64;
        let lower = pts.iter().filter(|s| s.p.z < 0.0).count() as f64;
        // lower ~ Binomial(50_000, 1/50): mean 1000, sd ~31
        assert!((lower - 1000.0).abs() < 4.0 * 31.3, "{lower}");
        assert!((upper / lower - 50.0).abs() < 7.0, "{}", upper / lower);
    }

    #[test]
    fn noise_and_tilt_bounds() {
        let spec = SyntheticCloudSpec {
            count: 2000,
            noise_sigma: 0.01,
            orientation_error_deg: 20.0,
            seed: 4,
            ..Default::default()
        };
        let pts = generate_cloud(&spec).unwrap();
        let radial: Vec<f64> = pts.iter().map(|s| s.p.coords.norm() - 1.0).collect();
        let sd = (radial.iter().map(|r| r * r).sum::<f64>() / radial.len() as f64).sqrt();
        assert!((sd - 0.01).abs() < 0.002, "{sd}");
        let mut max_angle = 0.0f64;
        for s in &pts {
            let a = s.v.normalize().dot(&s.p.coords.normalize()).clamp(-1.0, 1.0).acos().to_degrees();
            max_angle = max_angle.max(a);
        }
        assert!(max_angle <= 20.0 + 1e-9 && max_angle > 15.0, "{max_angle}");
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SyntheticCloudSpec { count: 0, ..Default::default() },
            SyntheticCloudSpec { radius: 0.0, ..Default::default() },
            SyntheticCloudSpec { density_skew: 0.5, ..Default::default() },
            SyntheticCloudSpec { hole_cap_angle: -0.1, ..Default::default() },
        ] {
            assert!(generate_cloud(&spec).is_err());
        }
    }
}
