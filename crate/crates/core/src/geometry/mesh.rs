use crate::error::{Error, Result};
use crate::pointvoxel::Point;

/// Indexed triangle mesh with cached face areas.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    areas: Vec<f64>,
}

pub(crate) fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
}

impl TriangleMesh {
    /// Validates indices and requires at least one face of positive area.
    /// Degenerate faces are kept with zero area.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::Contract("mesh has no faces".into()));
        }
        if let Some(i) = vertices.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Contract(format!("vertex {i} has a non-finite coordinate")));
        }
        for (f, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::Contract(format!(
                    "face {f} references vertex {bad} but the mesh has {} vertices",
                    vertices.len()
                )));
            }
        }
        let areas: Vec<f64> = faces
            .iter()
            .map(|f| triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]))
            .collect();
        if !areas.iter().any(|&a| a > 0.0) {
            return Err(Error::Contract("mesh has no face with positive area".into()));
        }
        Ok(TriangleMesh { vertices, faces, areas })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn triangle(&self, face: usize) -> [Point; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Same connectivity with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension {
                op: "with_vertices",
                axis: "vertex count",
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        TriangleMesh::new(vertices, self.faces.clone())
    }

    /// Per-vertex sorted, de-duplicated 1-ring neighbours.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if a != b {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Fan-triangulate a polygon given as vertex indices.
pub(crate) fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(TriangleMesh::new(v.clone(), vec![]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 0, 1]]).is_err());
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 0, 1]]).unwrap();
        assert_eq!(m.areas(), &[0.5, 0.0]);
    }

    #[test]
    fn fan_split() {
        let mut out = Vec::new();
        fan(&[4, 5, 6, 7], &mut out);
        assert_eq!(out, vec![[4, 5, 6], [4, 6, 7]]);
    }
}
