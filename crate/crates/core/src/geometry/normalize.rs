use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::pointvoxel::{Point, PointCloud};

/// `p' = p · scale + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub translation: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub const IDENTITY: NormalizationTransform = NormalizationTransform {
        translation: [0.0; 3],
        scale: 1.0,
    };

    pub fn apply(&self, p: &Point) -> Point {
        [
            p[0] * self.scale + self.translation[0],
            p[1] * self.scale + self.translation[1],
            p[2] * self.scale + self.translation[2],
        ]
    }

    pub fn invert(&self, p: &Point) -> Point {
        [
            (p[0] - self.translation[0]) / self.scale,
            (p[1] - self.translation[1]) / self.scale,
            (p[2] - self.translation[2]) / self.scale,
        ]
    }
}

/// Bounding box fit shared by clouds and meshes. Returns the normalized
/// points and the transform that produced them.
///
/// Points are mapped as `(p − min) / L + offset`, `L` being the longest
/// extent, so the longest side lands on exactly `[0, 1]`; the returned
/// transform reproduces this up to rounding.
pub fn normalize_points(points: &[Point]) -> Result<(Vec<Point>, NormalizationTransform)> {
    if points.is_empty() {
        return Err(Error::Contract("cannot normalize an empty point set".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let longest = ext[0].max(ext[1]).max(ext[2]);
    if !(longest > 0.0) || !longest.is_finite() {
        return Err(Error::Contract(
            "degenerate input: all points coincide, nothing to normalize".into(),
        ));
    }
    let offset = ext.map(|e| (1.0 - e / longest) / 2.0);
    let out = points
        .iter()
        .map(|p| {
            [
                (p[0] - lo[0]) / longest + offset[0],
                (p[1] - lo[1]) / longest + offset[1],
                (p[2] - lo[2]) / longest + offset[2],
            ]
        })
        .collect();
    let transform = NormalizationTransform {
        translation: [0, 1, 2].map(|a| offset[a] - lo[a] / longest),
        scale: 1.0 / longest,
    };
    Ok((out, transform))
}

pub fn normalize_cloud(cloud: &PointCloud) -> Result<(PointCloud, NormalizationTransform)> {
    let (pts, t) = normalize_points(cloud.coords())?;
    let mut out = PointCloud::new(pts)?;
    if let Some(f) = cloud.features() {
        out = out.with_features(f.clone())?;
    }
    Ok((out, t))
}

pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizationTransform)> {
    let (pts, t) = normalize_points(mesh.vertices())?;
    Ok((mesh.with_vertices(pts)?, t))
}
