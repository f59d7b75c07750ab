use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{Manifest, ManifestEntry};
use crate::corruption::{corrupt_cloud, corrupt_mesh, subsample};
use crate::error::{Error, Result};
use crate::geometry::{load_mesh, normalize_cloud, normalize_mesh, primitives, read_pvpc, MeshFormat, TriangleMesh};
use crate::pointvoxel::PointCloud;
use crate::rng::derive_seed;

/// Aligned corrupted input and clean target for one manifest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub id: String,
    pub input: PointCloud,
    pub target: PointCloud,
}

#[derive(Debug)]
enum Geometry {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

/// Produces pair samples on demand, caching normalized source geometry.
pub struct PairFactory<'m> {
    manifest: &'m Manifest,
    n_points: usize,
    cache: Mutex<HashMap<String, Arc<Geometry>>>,
}

impl<'m> PairFactory<'m> {
    pub fn new(manifest: &'m Manifest, n_points: usize) -> Self {
        PairFactory {
            manifest,
            n_points,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn geometry(&self, path: &str) -> Result<Arc<Geometry>> {
        if let Some(g) = self.cache.lock().expect("cache lock").get(path) {
            return Ok(g.clone());
        }
        let geom = if let Some(name) = path.strip_prefix("primitive:") {
            Geometry::Mesh(normalize_mesh(&primitives::by_name(name)?)?.0)
        } else {
            let full = self.manifest.resolve(path);
            let is_cloud = full.extension().and_then(|e| e.to_str()) == Some("pvpc");
            if is_cloud {
                Geometry::Cloud(normalize_cloud(&read_pvpc(&full)?)?.0)
            } else {
                let mesh = load_mesh(&full, MeshFormat::from_path(&full)?)?;
                Geometry::Mesh(normalize_mesh(&mesh)?.0)
            }
        };
        let geom = Arc::new(geom);
        self.cache.lock().expect("cache lock").insert(path.to_string(), geom.clone());
        Ok(geom)
    }

    pub fn pair(&self, entry: &ManifestEntry) -> Result<PairSample> {
        let spec = &entry.corruption;
        let (target, input) = match &*self.geometry(&entry.path)? {
            Geometry::Mesh(m) => corrupt_mesh(m, self.n_points, spec)?,
            Geometry::Cloud(c) => {
                if spec.smoothing_iterations > 0 {
                    return Err(Error::Config(format!(
                        "{}: mesh smoothing requested for a point-cloud source",
                        entry.id
                    )));
                }
                let clean = subsample(c, self.n_points, spec.seed)?;
                let input = corrupt_cloud(&clean, spec)?;
                (clean, input)
            }
        };
        Ok(PairSample {
            id: entry.id.clone(),
            input,
            target,
        })
    }
}

/// Batches of one epoch, as positions into the training fold. The order is
/// a pure function of `(seed, epoch)`.
pub fn epoch_batches(n_train: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_train).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch)));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_each_epoch_once() {
        let b = epoch_batches(10, 4, 1, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(b, epoch_batches(10, 4, 1, 0));
        assert_ne!(b, epoch_batches(10, 4, 1, 1));
    }
}
