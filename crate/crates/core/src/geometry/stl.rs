use std::collections::HashMap;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::pointvoxel::Point;

/// Welds bit-identical corners into shared vertices.
#[derive(Default)]
struct Welder {
    map: HashMap<[u64; 3], usize>,
    vertices: Vec<Point>,
}

impl Welder {
    fn index(&mut self, p: Point) -> usize {
        let key = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
        let next = self.vertices.len();
        *self.map.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            next
        })
    }
}

/// Parse STL. Binary files are recognised by their exact size; anything else
/// starting with `solid` is read as ASCII. Identical corners are welded.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    if bytes.len() >= 84 {
        let count = u32::from_le_bytes(bytes[80..84].try_into().expect("4 bytes")) as usize;
        if count.checked_mul(50).and_then(|b| b.checked_add(84)) == Some(bytes.len()) {
            return parse_binary(bytes, count);
        }
    }
    if bytes.trim_ascii_start().starts_with(b"solid") {
        return parse_ascii(bytes);
    }
    Err(Error::parse_offset(
        bytes.len().min(84),
        "not a binary STL (size mismatch) and not ASCII STL",
    ))
}

fn parse_binary(bytes: &[u8], count: usize) -> Result<TriangleMesh> {
    let mut w = Welder::default();
    let mut faces = Vec::with_capacity(count);
    for t in 0..count {
        let base = 84 + t * 50 + 12;
        let mut tri = [0usize; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let mut p: Point = [0.0; 3];
            for (a, c) in p.iter_mut().enumerate() {
                let o = base + k * 12 + a * 4;
                let v = f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
                if !v.is_finite() {
                    return Err(Error::parse_offset(o, "non-finite coordinate"));
                }
                *c = v as f64;
            }
            *slot = w.index(p);
        }
        faces.push(tri);
    }
    if faces.is_empty() {
        return Err(Error::parse_offset(80, "no triangles"));
    }
    TriangleMesh::new(w.vertices, faces)
}

fn parse_ascii(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse_offset(e.valid_up_to(), "invalid UTF-8"))?;
    let mut w = Welder::default();
    let mut faces = Vec::new();
    let mut corners: Vec<usize> = Vec::new();
    let mut in_facet = false;
    let mut ended = false;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("facet") => {
                if in_facet {
                    return Err(Error::parse_line(line_no, "nested facet"));
                }
                in_facet = true;
                corners.clear();
            }
            Some("vertex") => {
                if !in_facet {
                    return Err(Error::parse_line(line_no, "vertex outside facet"));
                }
                let mut p: Point = [0.0; 3];
                for c in &mut p {
                    let t = tok
                        .next()
                        .ok_or_else(|| Error::parse_line(line_no, "vertex needs three coordinates"))?;
                    *c = t
                        .parse()
                        .map_err(|_| Error::parse_line(line_no, format!("bad coordinate {t:?}")))?;
                    if !c.is_finite() {
                        return Err(Error::parse_line(line_no, "non-finite coordinate"));
                    }
                }
                corners.push(w.index(p));
            }
            Some("endfacet") => {
                if !in_facet || corners.len() != 3 {
                    return Err(Error::parse_line(line_no, "facet must have exactly three vertices"));
                }
                faces.push([corners[0], corners[1], corners[2]]);
                in_facet = false;
            }
            Some("endsolid") => {
                ended = true;
                break;
            }
            _ => {}
        }
    }
    let last = text.lines().count().max(1);
    if in_facet || !ended {
        return Err(Error::parse_line(last, "unexpected end of file"));
    }
    if faces.is_empty() {
        return Err(Error::parse_line(last, "no facets"));
    }
    TriangleMesh::new(w.vertices, faces)
}

/// Binary STL with zero normals and attribute words.
pub fn encode_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.faces().len() as u32).to_le_bytes());
    for f in 0..mesh.faces().len() {
        out.extend_from_slice(&[0u8; 12]);
        for p in mesh.triangle(f) {
            for c in p {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0u8; 2]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::cube;

    #[test]
    fn binary_roundtrip_welds_vertices() {
        let m = parse_stl(&encode_stl(&cube())).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
        assert!((m.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ascii() {
        let src = "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\nendsolid t\n";
        let m = parse_stl(src.as_bytes()).unwrap();
        assert_eq!(m.total_area(), 0.5);
        let truncated = &src[..src.len() - 30];
        assert!(parse_stl(truncated.as_bytes()).is_err());
    }

    #[test]
    fn truncated_binary_rejected() {
        let bytes = encode_stl(&cube());
        assert!(parse_stl(&bytes[..bytes.len() - 1]).is_err());
    }
}
