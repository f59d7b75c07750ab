use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::pointvoxel::{Point, PointCloud};

/// Area-weighted face choice followed by folded barycentric sampling.
/// Identical seeds give bitwise identical clouds.
pub fn sample_uniform(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Contract("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.areas().len());
    let mut acc = 0.0;
    for &a in mesh.areas() {
        acc += a;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Contract("mesh has zero total area".into()));
    }
    let last_positive = mesh.areas().iter().rposition(|&a| a > 0.0).expect("positive area");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let r = rng.random::<f64>() * acc;
            let face = cumulative.partition_point(|&c| c <= r).min(last_positive);
            let mut u: f64 = rng.random();
            let mut v: f64 = rng.random();
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = mesh.triangle(face);
            let mut p: Point = [0.0; 3];
            for k in 0..3 {
                p[k] = a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k]);
            }
            p
        })
        .collect();
    PointCloud::new(points)
}
