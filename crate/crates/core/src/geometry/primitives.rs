//! Small closed meshes used by tests, demos and synthetic datasets.

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

/// Unit cube `[0, 1]³`, 8 vertices and 12 triangles.
pub fn cube() -> TriangleMesh {
    let mut v = Vec::with_capacity(8);
    for x in [0.0, 1.0] {
        for y in [0.0, 1.0] {
            for z in [0.0, 1.0] {
                v.push([x, y, z]);
            }
        }
    }
    let quads = [
        [0, 1, 3, 2],
        [4, 6, 7, 5],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 2, 6, 4],
        [1, 5, 7, 3],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(v, faces).expect("valid cube")
}

/// Regular tetrahedron with edge length `2√2`.
pub fn tetrahedron() -> TriangleMesh {
    let v = vec![
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new(v, f).expect("valid tetrahedron")
}

pub fn octahedron() -> TriangleMesh {
    let v = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let f = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    TriangleMesh::new(v, f).expect("valid octahedron")
}

/// Square base of side 2 with apex at height 1.5.
pub fn square_pyramid() -> TriangleMesh {
    let v = vec![
        [-1.0, -1.0, 0.0],
        [1.0, -1.0, 0.0],
        [1.0, 1.0, 0.0],
        [-1.0, 1.0, 0.0],
        [0.0, 0.0, 1.5],
    ];
    let f = vec![[0, 2, 1], [0, 3, 2], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    TriangleMesh::new(v, f).expect("valid pyramid")
}

/// Closed cylinder of radius 0.5 and height 1 with `segments` sides.
pub fn cylinder(segments: usize) -> Result<TriangleMesh> {
    if segments < 3 {
        return Err(Error::Config(format!("cylinder needs at least 3 segments, got {segments}")));
    }
    let mut v = Vec::with_capacity(2 * segments + 2);
    for k in 0..segments {
        let t = std::f64::consts::TAU * k as f64 / segments as f64;
        let (s, c) = t.sin_cos();
        v.push([0.5 * c, 0.5 * s, 0.0]);
        v.push([0.5 * c, 0.5 * s, 1.0]);
    }
    let bottom = v.len();
    v.push([0.0, 0.0, 0.0]);
    v.push([0.0, 0.0, 1.0]);
    let mut f = Vec::with_capacity(4 * segments);
    for k in 0..segments {
        let (a, b) = (2 * k, 2 * ((k + 1) % segments));
        f.push([a, b, a + 1]);
        f.push([b, b + 1, a + 1]);
        f.push([bottom, b, a]);
        f.push([bottom + 1, a + 1, b + 1]);
    }
    TriangleMesh::new(v, f)
}

/// Look up a primitive by name (`cube`, `tetrahedron`, `octahedron`,
/// `pyramid`, `cylinder`).
pub fn by_name(name: &str) -> Result<TriangleMesh> {
    match name {
        "cube" => Ok(cube()),
        "tetrahedron" => Ok(tetrahedron()),
        "octahedron" => Ok(octahedron()),
        "pyramid" => Ok(square_pyramid()),
        "cylinder" => cylinder(32),
        other => Err(Error::Config(format!("unknown primitive {other:?}"))),
    }
}

pub const NAMES: [&str; 5] = ["cube", "tetrahedron", "octahedron", "pyramid", "cylinder"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_areas() {
        assert_eq!(cube().total_area(), 6.0);
        // Four equilateral faces of side 2√2.
        assert!((tetrahedron().total_area() - 8.0 * 3f64.sqrt()).abs() < 1e-12);
        // Eight equilateral faces of side √2.
        assert!((octahedron().total_area() - 4.0 * 3f64.sqrt()).abs() < 1e-12);
        let slant = (1.0f64 + 2.25).sqrt();
        assert!((square_pyramid().total_area() - (4.0 + 4.0 * slant)).abs() < 1e-12);
    }

    #[test]
    fn every_edge_shared_by_two_faces() {
        for name in NAMES {
            let m = by_name(name).unwrap();
            let mut edges = std::collections::HashMap::new();
            for f in m.faces() {
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            assert!(edges.values().all(|&c| c == 2), "{name}");
        }
    }
}
