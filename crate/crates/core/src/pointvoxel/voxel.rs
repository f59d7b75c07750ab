use super::{Point, PointCloud};
use crate::autodiff::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Mean-aggregated `C × r³` feature grid with per-cell point counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub resolution: usize,
    pub channels: usize,
    pub values: Tensor,
    pub occupancy: Vec<u32>,
}

fn axis_cell(v: f64, r: usize) -> usize {
    let i = (v * r as f64).floor();
    if i.is_nan() || i < 0.0 {
        0
    } else {
        (i as usize).min(r - 1)
    }
}

/// Flat cell index of a point: `⌊x·r⌋` clamped to `[0, r−1]` per axis, x-major.
pub fn cell_of(p: &Point, r: usize) -> usize {
    (axis_cell(p[0], r) * r + axis_cell(p[1], r)) * r + axis_cell(p[2], r)
}

/// The 8 trilinear `(cell, weight)` pairs for a query, with cell centers at
/// `(i + 0.5) / r` and queries clamped to the span of centers.
pub fn trilinear_weights(p: &Point, r: usize) -> [(usize, Scalar); 8] {
    let mut lo = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..3 {
        let u = (p[a] * r as f64 - 0.5).clamp(0.0, (r - 1) as f64);
        let u = if u.is_nan() { 0.0 } else { u };
        let i0 = (u.floor() as usize).min(r - 2);
        lo[a] = i0;
        t[a] = u - i0 as f64;
    }
    let mut out = [(0usize, 0.0 as Scalar); 8];
    for (corner, slot) in out.iter_mut().enumerate() {
        let (dx, dy, dz) = (corner >> 2 & 1, corner >> 1 & 1, corner & 1);
        let w = |d: usize, a: usize| if d == 1 { t[a] } else { 1.0 - t[a] };
        let weight = w(dx, 0) * w(dy, 1) * w(dz, 2);
        let cell = ((lo[0] + dx) * r + lo[1] + dy) * r + lo[2] + dz;
        *slot = (cell, weight as Scalar);
    }
    out
}

fn check_res(r: usize) -> Result<()> {
    if r < 2 {
        return Err(Error::Config(format!("voxel resolution must be at least 2, got {r}")));
    }
    Ok(())
}

fn voxelize_raw(features: &[Scalar], c: usize, cells: &[usize], r: usize) -> (Vec<Scalar>, Vec<u32>) {
    let r3 = r * r * r;
    let mut counts = vec![0u32; r3];
    let mut sums = vec![0.0; c * r3];
    for (n, &cell) in cells.iter().enumerate() {
        counts[cell] += 1;
        for ch in 0..c {
            sums[ch * r3 + cell] += features[n * c + ch];
        }
    }
    for ch in 0..c {
        for cell in 0..r3 {
            if counts[cell] > 0 {
                sums[ch * r3 + cell] /= counts[cell] as Scalar;
            }
        }
    }
    (sums, counts)
}

/// Voxelize a cloud's features by per-cell mean.
pub fn voxelize(cloud: &PointCloud, r: usize) -> Result<VoxelGrid> {
    check_res(r)?;
    let features = cloud
        .features()
        .ok_or_else(|| Error::Contract("voxelize needs point features".into()))?;
    let c = features.shape()[1];
    if c == 0 {
        return Err(Error::Contract("voxelize needs at least one feature channel".into()));
    }
    let cells: Vec<usize> = cloud.coords().iter().map(|p| cell_of(p, r)).collect();
    let (values, occupancy) = voxelize_raw(features.data(), c, &cells, r);
    Ok(VoxelGrid {
        resolution: r,
        channels: c,
        values: Tensor::from_parts(vec![c, r, r, r], values),
        occupancy,
    })
}

/// Trilinear read-out of a grid at arbitrary points, giving `n × C`.
pub fn devoxelize(grid: &VoxelGrid, coords: &[Point]) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = g.constant(grid.values.clone());
    let out = g.devoxelize(v, coords)?;
    Ok(g.value(out).clone())
}

impl Graph {
    /// Differentiable mean-voxelization of `n × C` features at `coords`.
    /// Returns the `C × r³` grid and the per-cell occupancy.
    pub fn voxelize(&mut self, features: Var, coords: &[Point], r: usize) -> Result<(Var, Vec<u32>)> {
        check_res(r)?;
        let tf = self.value(features);
        if tf.rank() != 2 || tf.shape()[0] != coords.len() {
            return Err(Error::Dimension {
                op: "voxelize",
                axis: "points",
                expected: coords.len(),
                found: tf.shape().first().copied().unwrap_or(0),
            });
        }
        let c = tf.shape()[1];
        if c == 0 {
            return Err(Error::Contract("voxelize needs at least one feature channel".into()));
        }
        let cells: Vec<usize> = coords.iter().map(|p| cell_of(p, r)).collect();
        let (values, counts) = voxelize_raw(tf.data(), c, &cells, r);
        let r3 = r * r * r;
        let occupancy = counts.clone();
        let var = self.push(
            "voxelize",
            Tensor::from_parts(vec![c, r, r, r], values),
            &[features],
            Box::new(move |ctx| {
                let mut d = vec![0.0; cells.len() * c];
                for (n, &cell) in cells.iter().enumerate() {
                    let inv = 1.0 / counts[cell] as Scalar;
                    for ch in 0..c {
                        d[n * c + ch] = ctx.grad[ch * r3 + cell] * inv;
                    }
                }
                vec![Some(d)]
            }),
        );
        Ok((var, occupancy))
    }

    /// Differentiable trilinear devoxelization of a `C × r³` grid.
    pub fn devoxelize(&mut self, grid: Var, coords: &[Point]) -> Result<Var> {
        let tg = self.value(grid);
        let s = tg.shape();
        if s.len() != 4 || s[1] != s[2] || s[2] != s[3] {
            return Err(Error::Contract(format!("devoxelize: expected a C×r×r×r grid, got {s:?}")));
        }
        let (c, r) = (s[0], s[1]);
        check_res(r)?;
        let r3 = r * r * r;
        let weights: Vec<[(usize, Scalar); 8]> = coords.iter().map(|p| trilinear_weights(p, r)).collect();
        let gd = tg.data();
        let mut out = vec![0.0; coords.len() * c];
        for (n, ws) in weights.iter().enumerate() {
            for ch in 0..c {
                let plane = &gd[ch * r3..(ch + 1) * r3];
                out[n * c + ch] = ws.iter().map(|&(cell, w)| w * plane[cell]).sum();
            }
        }
        Ok(self.push(
            "devoxelize",
            Tensor::from_parts(vec![coords.len(), c], out),
            &[grid],
            Box::new(move |ctx| {
                let mut d = vec![0.0; c * r3];
                for (n, ws) in weights.iter().enumerate() {
                    for ch in 0..c {
                        let g = ctx.grad[n * c + ch];
                        for &(cell, w) in ws {
                            d[ch * r3 + cell] += w * g;
                        }
                    }
                }
                vec![Some(d)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(coords: Vec<Point>, feats: &[&[Scalar]]) -> PointCloud {
        let f = Tensor::from_rows(feats).unwrap();
        PointCloud::new(coords).unwrap().with_features(f).unwrap()
    }

    fn center(i: usize, j: usize, k: usize, r: usize) -> Point {
        let c = |i: usize| (i as f64 + 0.5) / r as f64;
        [c(i), c(j), c(k)]
    }

    #[test]
    fn single_point_lands_in_upper_cell() {
        let g = voxelize(&cloud(vec![[0.75, 0.75, 0.75]], &[&[5.0]]), 2).unwrap();
        assert_eq!(g.values.data()[7], 5.0);
        assert_eq!(g.values.data().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(g.occupancy[7], 1);
    }

    #[test]
    fn shared_cell_takes_mean() {
        let g = voxelize(&cloud(vec![[0.1, 0.1, 0.1], [0.2, 0.3, 0.4]], &[&[1.0], &[3.0]]), 2).unwrap();
        assert_eq!(g.values.data()[0], 2.0);
        assert_eq!(g.occupancy[0], 2);
    }

    #[test]
    fn missing_or_empty_features_rejected() {
        let bare = PointCloud::new(vec![[0.5; 3]]).unwrap();
        assert!(matches!(voxelize(&bare, 2), Err(Error::Contract(_))));
        let empty = bare.with_features(Tensor::zeros(&[1, 0])).unwrap();
        assert!(matches!(voxelize(&empty, 2), Err(Error::Contract(_))));
    }

    #[test]
    fn outside_points_are_clamped() {
        assert_eq!(cell_of(&[-0.2, 1.0, 1.7], 4), (0 * 4 + 3) * 4 + 3);
    }

    #[test]
    fn devoxelize_at_centers_and_midpoints() {
        let r = 4;
        let values: Vec<Scalar> = (0..64).map(|i| i as Scalar * 0.5 - 3.0).collect();
        let grid = VoxelGrid {
            resolution: r,
            channels: 1,
            values: Tensor::new(vec![1, r, r, r], values.clone()).unwrap(),
            occupancy: vec![1; 64],
        };
        let out = devoxelize(&grid, &[center(1, 2, 3, r), center(3, 3, 3, r), center(0, 0, 0, r)]).unwrap();
        assert_eq!(out.data(), &[values[(4 + 2) * 4 + 3], values[63], values[0]]);
        // Midway between (1,2,3) and (2,2,3) along x.
        let mut mid = center(1, 2, 3, r);
        mid[0] = 2.0 / r as f64;
        let out = devoxelize(&grid, &[mid]).unwrap();
        let expect = 0.5 * (values[(4 + 2) * 4 + 3] + values[(8 + 2) * 4 + 3]);
        assert!((out.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn constant_grid_reads_constant() {
        let grid = VoxelGrid {
            resolution: 3,
            channels: 2,
            values: Tensor::full(&[2, 3, 3, 3], 1.75),
            occupancy: vec![0; 27],
        };
        let pts = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.31, 0.77, 0.05], [0.5, 0.5, 0.5]];
        let out = devoxelize(&grid, &pts).unwrap();
        assert!(out.data().iter().all(|v| (v - 1.75).abs() < 1e-12));
    }

    #[test]
    fn roundtrip_at_distinct_centers_is_exact() {
        let r = 8;
        let pts = vec![center(0, 0, 0, r), center(7, 1, 3, r), center(2, 5, 6, r), center(7, 7, 7, r)];
        let feats: Vec<Vec<Scalar>> = (0..4).map(|i| vec![i as Scalar + 0.125, -(i as Scalar)]).collect();
        let rows: Vec<&[Scalar]> = feats.iter().map(|f| f.as_slice()).collect();
        let c = cloud(pts.clone(), &rows);
        let grid = voxelize(&c, r).unwrap();
        let back = devoxelize(&grid, &pts).unwrap();
        assert_eq!(&back, c.features().unwrap());
    }

    proptest! {
        #[test]
        fn trilinear_partition_of_unity(x in -0.1f64..1.1, y in -0.1f64..1.1, z in -0.1f64..1.1, r in 2usize..33) {
            let total: f64 = trilinear_weights(&[x, y, z], r).iter().map(|&(_, w)| w as f64).sum();
            prop_assert!((total - 1.0).abs() < 64.0 * Scalar::EPSILON as f64);
        }

        #[test]
        fn voxelize_preserves_mass(
            pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0), 1..64),
            r in 2usize..9,
        ) {
            let coords: Vec<Point> = pts.iter().map(|p| [p.0, p.1, p.2]).collect();
            let feats = Tensor::new(vec![pts.len(), 1], pts.iter().map(|p| p.3 as Scalar).collect()).unwrap();
            let c = PointCloud::new(coords).unwrap().with_features(feats).unwrap();
            let g = voxelize(&c, r).unwrap();
            let mass: f64 = g.values.data().iter().zip(&g.occupancy).map(|(v, &n)| *v as f64 * n as f64).sum();
            let direct: f64 = pts.iter().map(|p| p.3).sum();
            let tol = if cfg!(feature = "f32") { 1e-3 } else { 1e-9 };
            prop_assert!((mass - direct).abs() < tol);
            for (v, &n) in g.values.data().iter().zip(&g.occupancy) {
                if n == 0 { prop_assert_eq!(*v, 0.0); }
            }
        }
    }
}
