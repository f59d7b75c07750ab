//! Synthetic scan artifacts: surface smoothing, coordinate noise and holes.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{sample_uniform, TriangleMesh};
use crate::pointvoxel::{Point, PointCloud};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    /// Per-axis standard deviation in normalized units.
    pub gaussian_sigma: f64,
    pub hole_count: usize,
    pub hole_radius: f64,
    /// Laplacian step size; ignored when `smoothing_iterations` is 0.
    pub smoothing_lambda: f64,
    pub smoothing_iterations: usize,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            gaussian_sigma: 0.03,
            hole_count: 0,
            hole_radius: 0.05,
            smoothing_lambda: 0.5,
            smoothing_iterations: 0,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be ≥ 0, got {}", self.gaussian_sigma)));
        }
        if !(0.0..0.5).contains(&self.hole_radius) {
            return Err(Error::Config(format!("hole radius must lie in [0, 0.5), got {}", self.hole_radius)));
        }
        if self.smoothing_iterations > 0 && !(self.smoothing_lambda > 0.0 && self.smoothing_lambda <= 1.0) {
            return Err(Error::Config(format!(
                "smoothing lambda must lie in (0, 1], got {}",
                self.smoothing_lambda
            )));
        }
        Ok(())
    }
}

/// Independent `N(0, σ²)` offset on every coordinate. Not re-normalized.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be ≥ 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = cloud
        .coords()
        .iter()
        .map(|p| p.map(|v| v + normal.sample(&mut rng)))
        .collect();
    PointCloud::new(pts)
}

/// Remove every point within `radius` of `count` distinct randomly chosen
/// cloud points, then refill to the original size by copying random
/// survivors with `N(0, (radius/10)²)` jitter.
pub fn punch_holes(cloud: &PointCloud, count: usize, radius: f64, seed: u64) -> Result<PointCloud> {
    if count == 0 {
        return Ok(cloud.clone());
    }
    if !(radius >= 0.0) {
        return Err(Error::Config(format!("hole radius must be ≥ 0, got {radius}")));
    }
    let pts = cloud.coords();
    let n = pts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Point> = sample(&mut rng, n, count.min(n)).iter().map(|i| pts[i]).collect();
    let r2 = radius * radius;
    let inside = |p: &Point| {
        centers.iter().any(|c| {
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r2
        })
    };
    let mut out: Vec<Point> = pts.iter().filter(|p| !inside(p)).copied().collect();
    if out.is_empty() {
        return Err(Error::Corruption(format!(
            "{count} holes of radius {radius} removed all {n} points"
        )));
    }
    let survivors = out.len();
    let jitter = Normal::new(0.0, radius / 10.0).map_err(|e| Error::Config(e.to_string()))?;
    while out.len() < n {
        let src = out[rng.random_range(0..survivors)];
        out.push(src.map(|v| v + jitter.sample(&mut rng)));
    }
    PointCloud::new(out)
}

/// Synchronous Laplacian smoothing: every vertex moves `lambda` of the way
/// toward the mean of its 1-ring. Vertices without neighbours stay put.
pub fn smooth_mesh(mesh: &TriangleMesh, lambda: f64, iterations: usize) -> Result<TriangleMesh> {
    if iterations == 0 {
        return Ok(mesh.clone());
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("smoothing lambda must lie in (0, 1], got {lambda}")));
    }
    let adj = mesh.neighbors();
    let mut v = mesh.vertices().to_vec();
    for _ in 0..iterations {
        v = v
            .iter()
            .zip(&adj)
            .map(|(p, nb)| {
                if nb.is_empty() {
                    return *p;
                }
                let k = nb.len() as f64;
                let mut mean = [0.0; 3];
                for &j in nb {
                    for a in 0..3 {
                        mean[a] += v[j][a];
                    }
                }
                [0, 1, 2].map(|a| p[a] + lambda * (mean[a] / k - p[a]))
            })
            .collect();
    }
    mesh.with_vertices(v)
}

/// Stream keys for the stages of [`corrupt_mesh`].
const STREAM_SAMPLE: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_HOLES: u64 = 2;

/// Clean target and corrupted input for one mesh: the target samples the
/// original surface; the input runs smooth → sample → noise → holes. Both
/// draws share the sampling seed, so an all-zero spec yields equal clouds.
pub fn corrupt_mesh(mesh: &TriangleMesh, n: usize, spec: &CorruptionSpec) -> Result<(PointCloud, PointCloud)> {
    spec.validate()?;
    let sample_seed = derive_seed(spec.seed, STREAM_SAMPLE);
    let clean = sample_uniform(mesh, n, sample_seed)?;
    let scanned = if spec.smoothing_iterations > 0 {
        let smooth = smooth_mesh(mesh, spec.smoothing_lambda, spec.smoothing_iterations)?;
        sample_uniform(&smooth, n, sample_seed)?
    } else {
        clean.clone()
    };
    Ok((clean, corrupt_cloud(&scanned, spec)?))
}

/// The point-level stages of [`corrupt_mesh`]: noise, then holes.
pub fn corrupt_cloud(cloud: &PointCloud, spec: &CorruptionSpec) -> Result<PointCloud> {
    spec.validate()?;
    let noisy = add_gaussian_noise(cloud, spec.gaussian_sigma, derive_seed(spec.seed, STREAM_NOISE))?;
    punch_holes(&noisy, spec.hole_count, spec.hole_radius, derive_seed(spec.seed, STREAM_HOLES))
}

/// Seeded subset of `n` points, kept in their original order.
pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if cloud.len() < n {
        return Err(Error::Contract(format!("cloud has {} points, {n} requested", cloud.len())));
    }
    if cloud.len() == n {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLE));
    let mut idx = sample(&mut rng, cloud.len(), n).into_vec();
    idx.sort_unstable();
    PointCloud::new(idx.iter().map(|&i| cloud.coords()[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn grid_cloud() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push([i as f64 / 10.0, j as f64 / 10.0, 0.5]);
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn zero_settings_are_identity() {
        let c = grid_cloud();
        assert_eq!(add_gaussian_noise(&c, 0.0, 1).unwrap(), c);
        assert_eq!(punch_holes(&c, 0, 0.2, 1).unwrap(), c);
        let m = primitives::cube();
        assert_eq!(smooth_mesh(&m, 0.7, 0).unwrap(), m);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(add_gaussian_noise(&grid_cloud(), -0.1, 0).is_err());
        assert!(smooth_mesh(&primitives::cube(), 0.0, 1).is_err());
        let spec = CorruptionSpec { hole_radius: 0.5, ..Default::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn holes_keep_size_and_fail_when_everything_goes() {
        let c = grid_cloud();
        let out = punch_holes(&c, 3, 0.15, 9).unwrap();
        assert_eq!(out.len(), c.len());
        let tiny = PointCloud::new(vec![[0.5; 3], [0.51, 0.5, 0.5]]).unwrap();
        assert!(matches!(punch_holes(&tiny, 1, 0.2, 0), Err(Error::Corruption(_))));
    }

    #[test]
    fn pipeline_with_no_corruption_returns_equal_clouds() {
        let spec = CorruptionSpec { gaussian_sigma: 0.0, ..Default::default() };
        let (clean, input) = corrupt_mesh(&primitives::cube(), 64, &spec).unwrap();
        assert_eq!(clean, input);
    }
}
